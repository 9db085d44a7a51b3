#pragma once

#include "sgg/autodiff.hpp"
#include "sgg/dataset.hpp"
#include "sgg/error.hpp"
#include "sgg/experiment.hpp"
#include "sgg/geometry.hpp"
#include "sgg/graph.hpp"
#include "sgg/graph_io.hpp"
#include "sgg/hierarchy.hpp"
#include "sgg/metrics.hpp"
#include "sgg/multiset.hpp"
#include "sgg/relations.hpp"
#include "sgg/retrieval.hpp"
#include "sgg/rng.hpp"
#include "sgg/scene_io.hpp"
#include "sgg/scores.hpp"
#include "sgg/sgpn.hpp"
#include "sgg/synth.hpp"
#include "sgg/vocab.hpp"
