#pragma once

#include "coursedp/bandit.hpp"
#include "coursedp/curriculum.hpp"
#include "coursedp/curriculum_io.hpp"
#include "coursedp/error.hpp"
#include "coursedp/planner.hpp"
#include "coursedp/policy_io.hpp"
#include "coursedp/random.hpp"
#include "coursedp/simulator.hpp"
#include "coursedp/synth.hpp"
