#pragma once

#include "protoco/checkpoint.hpp"
#include "protoco/consistency.hpp"
#include "protoco/data.hpp"
#include "protoco/eval.hpp"
#include "protoco/instance.hpp"
#include "protoco/model.hpp"
#include "protoco/prompting.hpp"
#include "protoco/scoring.hpp"
#include "protoco/tensor.hpp"
#include "protoco/tokenizer.hpp"
#include "protoco/training.hpp"
#include "protoco/verdict.hpp"
