#pragma once

#include "vdt/baselines.hpp"
#include "vdt/bench.hpp"
#include "vdt/block_model.hpp"
#include "vdt/common.hpp"
#include "vdt/dataset.hpp"
#include "vdt/inference.hpp"
#include "vdt/model_io.hpp"
#include "vdt/partition_tree.hpp"
#include "vdt/refinement.hpp"
