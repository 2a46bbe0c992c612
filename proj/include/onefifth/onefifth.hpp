#pragma once

#include "onefifth/csv.hpp"
#include "onefifth/errors.hpp"
#include "onefifth/harness.hpp"
#include "onefifth/linalg.hpp"
#include "onefifth/objectives.hpp"
#include "onefifth/rng.hpp"
#include "onefifth/strategies.hpp"
#include "onefifth/theory.hpp"
