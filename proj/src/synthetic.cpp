// SPDX-License-Identifier: Apache-2.0

#include "pex/synthetic.hpp"

#include <algorithm>
#include <string>

#include "pex/errors.hpp"
#include "pex/random.hpp"

namespace pex::corpus {

namespace {

std::string content(std::size_t i) { return "w" + std::to_string(i); }

// Key placement varies across templates so position alone does not identify it.
const char* const kQuestionTemplates[] = {
    "which option goes with KEY ?",
    "KEY : which option fits ?",
    "find the partner of KEY",
    "for KEY pick one",
};

std::string render_question(std::size_t template_id, const std::string& key) {
  std::string q = kQuestionTemplates[template_id];
  q.replace(q.find("KEY"), 3, key);
  return q;
}

std::size_t draw_excluding(Rng& rng, std::size_t n, const std::vector<std::size_t>& excluded) {
  for (;;) {
    const auto v = static_cast<std::size_t>(uniform_below(rng, n));
    if (std::find(excluded.begin(), excluded.end(), v) == excluded.end()) return v;
  }
}

McqaSample make_sample(Rng& rng, const CopyKeyConfig& cfg, const std::vector<std::size_t>& rule,
                       const std::string& id) {
  const std::size_t key = static_cast<std::size_t>(uniform_below(rng, cfg.vocab));
  const std::size_t gold = static_cast<std::size_t>(uniform_below(rng, cfg.num_options));
  std::vector<std::size_t> used = {key};
  std::vector<std::size_t> opts(cfg.num_options);
  if (cfg.keyed_answers) {
    opts[gold] = rule[key];
    used.push_back(rule[key]);
  }
  for (std::size_t j = 0; j < cfg.num_options; ++j) {
    if (cfg.keyed_answers && j == gold) continue;
    // Distractors also avoid the key's rule partner so the rule stays unambiguous.
    std::vector<std::size_t> excluded = used;
    if (cfg.keyed_answers) excluded.push_back(rule[key]);
    opts[j] = draw_excluding(rng, cfg.vocab, excluded);
    used.push_back(opts[j]);
  }

  McqaSample s;
  s.id = id;
  s.question = render_question(static_cast<std::size_t>(uniform_below(rng, std::size(kQuestionTemplates))),
                               content(key));
  for (std::size_t o : opts) s.options.push_back(content(o));
  s.answer_index = static_cast<int>(gold);

  const bool decisive = uniform01(rng) < cfg.evidence_decisive_rate;
  std::vector<std::string> evidence;
  for (std::size_t j = 0; j < cfg.num_options; ++j) {
    std::vector<std::string> toks;
    for (std::size_t t = 0; t < cfg.evidence_len; ++t) toks.push_back(content(draw_excluding(rng, cfg.vocab, used)));
    if (j == gold && decisive) toks[static_cast<std::size_t>(uniform_below(rng, cfg.evidence_len))] = content(key);
    std::string e;
    for (const auto& t : toks) e += (e.empty() ? "" : " ") + t;
    evidence.push_back(std::move(e));
  }
  s.evidence = std::move(evidence);
  if (cfg.with_context) s.question_context = content(key) + " goes with " + content(opts[gold]);
  s.explanation = content(key) + " selects " + content(opts[gold]);
  return s;
}

}  // namespace

CopyKeySplits make_copy_key_task(const CopyKeyConfig& cfg) {
  if (cfg.num_options < 2) throw ParameterError("copy-key task needs at least 2 options");
  if (cfg.evidence_len < 1) throw ParameterError("copy-key evidence_len must be >= 1");
  // Needs key, K options and room for evidence filler.
  if (cfg.vocab < cfg.num_options + 3) throw ParameterError("copy-key vocab too small for K");

  Rng rng(derive_seed(cfg.seed, 0));
  std::vector<std::size_t> rule(cfg.vocab);
  for (std::size_t k = 0; k < cfg.vocab; ++k) {
    std::size_t partner;
    do {
      partner = static_cast<std::size_t>(uniform_below(rng, cfg.vocab));
    } while (partner == k);
    rule[k] = partner;
  }

  CopyKeySplits out;
  for (std::size_t i = 0; i < cfg.n_train; ++i)
    out.train.push_back(make_sample(rng, cfg, rule, "syn-train-" + std::to_string(i)));
  for (std::size_t i = 0; i < cfg.n_dev; ++i)
    out.dev.push_back(make_sample(rng, cfg, rule, "syn-dev-" + std::to_string(i)));
  return out;
}

}  // namespace pex::corpus
