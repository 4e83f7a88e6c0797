#pragma once

#include "cfr/embedding_store.hpp"
#include "cfr/encoder_io.hpp"
#include "cfr/entity_index.hpp"
#include "cfr/error.hpp"
#include "cfr/eval.hpp"
#include "cfr/pipeline.hpp"
#include "cfr/ranking.hpp"
#include "cfr/synth.hpp"
#include "cfr/types.hpp"
