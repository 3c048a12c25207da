#pragma once

#include "loopvet/so3.hpp"
#include "loopvet/graph.hpp"
#include "loopvet/graph_io.hpp"
#include "loopvet/cycles.hpp"
#include "loopvet/model.hpp"
#include "loopvet/infer_exact.hpp"
#include "loopvet/infer_bp.hpp"
#include "loopvet/simplex.hpp"
#include "loopvet/infer_admm.hpp"
#include "loopvet/em.hpp"
#include "loopvet/synth.hpp"
#include "loopvet/bench.hpp"
