#pragma once

#include "ratlearn/assumptions.hpp"
#include "ratlearn/dataset.hpp"
#include "ratlearn/diffgrad.hpp"
#include "ratlearn/errors.hpp"
#include "ratlearn/games.hpp"
#include "ratlearn/io.hpp"
#include "ratlearn/learner.hpp"
#include "ratlearn/linalg.hpp"
#include "ratlearn/model.hpp"
#include "ratlearn/qp.hpp"
#include "ratlearn/rules.hpp"
#include "ratlearn/verify.hpp"
