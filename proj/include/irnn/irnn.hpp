#pragma once

#include "irnn/config.hpp"
#include "irnn/corpus.hpp"
#include "irnn/eval.hpp"
#include "irnn/layers.hpp"
#include "irnn/math.hpp"
#include "irnn/model.hpp"
#include "irnn/model_io.hpp"
#include "irnn/pretrain.hpp"
#include "irnn/synthetic.hpp"
#include "irnn/training.hpp"
