#pragma once

// Evolutionary multi-objective search over recurrent cell architectures:
// block-DAG genotypes, approximate network morphisms, NSGA-II selection, a
// built-in BPTT trainer, and the counting-language sequence task.

#include "evocell/arch.hpp"
#include "evocell/cell.hpp"
#include "evocell/errors.hpp"
#include "evocell/morphism.hpp"
#include "evocell/nsga2.hpp"
#include "evocell/persist.hpp"
#include "evocell/rng.hpp"
#include "evocell/search.hpp"
#include "evocell/serialize.hpp"
#include "evocell/tasks.hpp"
