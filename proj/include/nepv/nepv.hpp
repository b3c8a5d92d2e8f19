#pragma once

#include "nepv/error.hpp"
#include "nepv/linalg.hpp"
#include "nepv/stiefel.hpp"
#include "nepv/alignment.hpp"
#include "nepv/problem.hpp"
#include "nepv/aligned.hpp"
#include "nepv/scf.hpp"
#include "nepv/analysis.hpp"
#include "nepv/experiments.hpp"
#include "nepv/io.hpp"
#include "nepv/config.hpp"
