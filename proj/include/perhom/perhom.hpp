#pragma once

#include "perhom/cell.hpp"
#include "perhom/config.hpp"
#include "perhom/dirichlet.hpp"
#include "perhom/exterior.hpp"
#include "perhom/hbar.hpp"
#include "perhom/lattice.hpp"
#include "perhom/liouville.hpp"
#include "perhom/numerics.hpp"
#include "perhom/operators.hpp"
#include "perhom/oscillation.hpp"
#include "perhom/presets.hpp"
#include "perhom/report.hpp"
#include "perhom/stencil.hpp"
#include "perhom/torus.hpp"
