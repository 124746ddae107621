#pragma once

#include "tokswap/aux_embeddings.hpp"
#include "tokswap/bpe.hpp"
#include "tokswap/embedding.hpp"
#include "tokswap/metrics.hpp"
#include "tokswap/pretokenizer.hpp"
#include "tokswap/sparsemax.hpp"
#include "tokswap/trainplan.hpp"
#include "tokswap/transfer.hpp"
#include "tokswap/vocabulary.hpp"
