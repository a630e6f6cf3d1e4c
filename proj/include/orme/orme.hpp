#pragma once

#include "orme/rng.hpp"
#include "orme/core.hpp"
#include "orme/linalg.hpp"
#include "orme/filter.hpp"
#include "orme/binary.hpp"
#include "orme/nonparam.hpp"
#include "orme/block.hpp"
#include "orme/threat.hpp"
#include "orme/stability.hpp"
#include "orme/harness/config.hpp"
#include "orme/harness/report.hpp"
#include "orme/harness/svg.hpp"
#include "orme/harness/experiment.hpp"
#include "orme/harness/bench.hpp"
#include "orme/harness/selftest.hpp"
