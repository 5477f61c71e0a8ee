// Small synthetic BUS stand-in shared by the training tests.
#pragma once

#include "core/data/datasets.hpp"
#include "core/data/synthetic.hpp"
#include "core/finetune/finetune.hpp"
#include "core/models/models.hpp"
#include "core/pretrain/pretrain.hpp"

namespace testutil {

struct SyntheticSet {
  sslseg::data::SplitSpec split;
  sslseg::finetune::SampleIndex plain;     // keyed by BUS id
  sslseg::pretrain::SampleIndex qualified;  // keyed by "bus:<id>"
  sslseg::data::PretrainCorpus corpus;
};

inline SyntheticSet synthetic_set(int train, int val, int test, int size = 16, std::uint64_t seed = 1) {
  namespace data = sslseg::data;
  SyntheticSet s;
  const auto samples = data::generate_synthetic({.count = train + val + test, .size = size}, seed);
  s.split = data::make_bus_split(samples, seed, data::SplitCounts{train, val, test}, "synthetic");
  for (const auto& sm : samples) {
    s.plain.emplace(sm.id, sm);
    auto q = sm;
    q.id = data::qualify(data::Source::kBus, sm.id);
    s.qualified.emplace(q.id, std::move(q));
  }
  s.corpus = data::bus_corpus(s.split, size);
  return s;
}

inline sslseg::models::NetworkSpec tiny_unet(int size = 16) {
  sslseg::models::NetworkSpec spec;
  spec.input_size = size;
  spec.base_width = 4;
  spec.depth = 2;
  spec.embedding_dim = 16;
  spec.pred_hidden = 8;
  return spec;
}

}  // namespace testutil
