#pragma once

// Umbrella header for the feedbacknet library.

#include "feedbacknet/checkpoint.hpp"
#include "feedbacknet/common.hpp"
#include "feedbacknet/config.hpp"
#include "feedbacknet/convlstm.hpp"
#include "feedbacknet/curriculum.hpp"
#include "feedbacknet/dataset.hpp"
#include "feedbacknet/graph_analysis.hpp"
#include "feedbacknet/network.hpp"
#include "feedbacknet/ops.hpp"
#include "feedbacknet/optim.hpp"
#include "feedbacknet/rng.hpp"
#include "feedbacknet/taxonomy.hpp"
#include "feedbacknet/tensor.hpp"
#include "feedbacknet/train.hpp"
