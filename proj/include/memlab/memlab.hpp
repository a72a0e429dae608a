#pragma once

#include "memlab/attacks.hpp"
#include "memlab/commands.hpp"
#include "memlab/config.hpp"
#include "memlab/data.hpp"
#include "memlab/error.hpp"
#include "memlab/eval.hpp"
#include "memlab/io.hpp"
#include "memlab/losses.hpp"
#include "memlab/memory.hpp"
#include "memlab/nn.hpp"
#include "memlab/optim.hpp"
#include "memlab/parallel.hpp"
#include "memlab/random.hpp"
#include "memlab/report.hpp"
#include "memlab/tensor.hpp"
#include "memlab/train.hpp"
