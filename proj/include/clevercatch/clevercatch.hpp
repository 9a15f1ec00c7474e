// clevercatch/clevercatch.hpp
// Umbrella header.
#pragma once

#include "clevercatch/error.hpp"
#include "clevercatch/rng.hpp"
#include "clevercatch/matrix.hpp"
#include "clevercatch/mlp.hpp"
#include "clevercatch/optimizer.hpp"
#include "clevercatch/grad_check.hpp"
#include "clevercatch/io.hpp"
#include "clevercatch/json_io.hpp"
#include "clevercatch/rules.hpp"
#include "clevercatch/ingest.hpp"
#include "clevercatch/features.hpp"
#include "clevercatch/embedding.hpp"
#include "clevercatch/alignment.hpp"
#include "clevercatch/detector.hpp"
#include "clevercatch/evaluation.hpp"
#include "clevercatch/ablation.hpp"
#include "clevercatch/simulator.hpp"
#include "clevercatch/config.hpp"
#include "clevercatch/pipeline.hpp"
