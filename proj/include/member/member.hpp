#pragma once

#include "member/baselines.hpp"
#include "member/bundle.hpp"
#include "member/checkpoint.hpp"
#include "member/commands.hpp"
#include "member/config.hpp"
#include "member/error.hpp"
#include "member/evaluator.hpp"
#include "member/expert.hpp"
#include "member/gradcheck.hpp"
#include "member/interactions.hpp"
#include "member/matrix.hpp"
#include "member/objectives.hpp"
#include "member/propagation.hpp"
#include "member/random.hpp"
#include "member/synthetic.hpp"
#include "member/trainer.hpp"
