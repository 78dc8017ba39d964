#pragma once

#include "ionlab/analysis.hpp"
#include "ionlab/constants.hpp"
#include "ionlab/crystal_modes.hpp"
#include "ionlab/dynamics.hpp"
#include "ionlab/error.hpp"
#include "ionlab/experiment.hpp"
#include "ionlab/optimize.hpp"
#include "ionlab/quantum_core.hpp"
#include "ionlab/sequence.hpp"
