#pragma once

#include "calibnet/bounds.hpp"
#include "calibnet/error.hpp"
#include "calibnet/estimators.hpp"
#include "calibnet/evaluation.hpp"
#include "calibnet/io.hpp"
#include "calibnet/linalg.hpp"
#include "calibnet/model.hpp"
#include "calibnet/simulation.hpp"
