#pragma once

#include "cdt/audio_io.hpp"
#include "cdt/error.hpp"
#include "cdt/experiment.hpp"
#include "cdt/framing.hpp"
#include "cdt/matrix.hpp"
#include "cdt/metrics.hpp"
#include "cdt/mlp.hpp"
#include "cdt/resynth.hpp"
#include "cdt/scene.hpp"
#include "cdt/synthetic.hpp"
