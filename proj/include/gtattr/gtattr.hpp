#pragma once

#include "gtattr/attention.hpp"
#include "gtattr/coalition.hpp"
#include "gtattr/equivalence.hpp"
#include "gtattr/error.hpp"
#include "gtattr/flow.hpp"
#include "gtattr/game.hpp"
#include "gtattr/report.hpp"
#include "gtattr/shapley.hpp"
