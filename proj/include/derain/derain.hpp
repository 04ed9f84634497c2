#pragma once

#include "derain/archive.hpp"
#include "derain/car_glyph.hpp"
#include "derain/corruption.hpp"
#include "derain/data.hpp"
#include "derain/error.hpp"
#include "derain/evaluation.hpp"
#include "derain/image.hpp"
#include "derain/layers.hpp"
#include "derain/networks.hpp"
#include "derain/run_config.hpp"
#include "derain/tensor.hpp"
#include "derain/training.hpp"
#include "derain/util.hpp"
