#pragma once

#include "manifold_probe/concept.hpp"
#include "manifold_probe/curvefit.hpp"
#include "manifold_probe/embedding_store.hpp"
#include "manifold_probe/episodes.hpp"
#include "manifold_probe/error.hpp"
#include "manifold_probe/harness.hpp"
#include "manifold_probe/manifest.hpp"
#include "manifold_probe/reduction.hpp"
#include "manifold_probe/report.hpp"
#include "manifold_probe/results_io.hpp"
#include "manifold_probe/rng.hpp"
#include "manifold_probe/synthetic.hpp"
