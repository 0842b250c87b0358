#pragma once

#include "a3/adi.hpp"
#include "a3/attack.hpp"
#include "a3/dataset.hpp"
#include "a3/errors.hpp"
#include "a3/evaluator.hpp"
#include "a3/format.hpp"
#include "a3/losses.hpp"
#include "a3/model.hpp"
#include "a3/osd.hpp"
#include "a3/report.hpp"
#include "a3/rng.hpp"
#include "a3/stats.hpp"
#include "a3/tensor.hpp"
#include "a3/testkit.hpp"
