#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace dsfm;
using dsfm::testing::random_dataset;
using dsfm::testing::small_schema;

namespace {

// O(n^2) pair counting with half credit for ties.
std::optional<double> pairwise_auc(const std::vector<int>& y, const std::vector<double>& s) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  if (pairs == 0.0) return std::nullopt;
  return wins / pairs;
}

// Label is 1 exactly when site is "a" or "b".
MultiDomainDataset separable(std::size_t n, std::uint64_t seed) {
  auto ds = random_dataset(small_schema(), n, seed);
  for (auto& s : ds.samples) s.label = s.values[0] < 2 ? 1 : 0;
  return ds;
}

ExperimentConfig small_experiment(std::uint64_t seed = 3) {
  ExperimentConfig c;
  c.seed = seed;
  c.seeds = 1;
  c.synthetic = planted_preset(1500, seed);
  c.train_samples = 1500;
  c.valid_samples = 300;
  c.test_samples = 600;
  c.model = BaseModelConfig{.embedding_dim = 4, .hidden = {8, 4}};
  c.memory_section = {{"emb_attn_dim", 4}, {"hidden_attn_dim", 2}};
  c.train = TrainConfig{.batch_size = 64, .epochs = 2, .learning_rate = 0.005};
  c.ig.steps = 2;
  c.top_k = {{FeatureGroup::CategoricalScalar, 2}, {FeatureGroup::NumericalScalar, 1}};
  return c;
}

}  // namespace

TEST(Auc, HandCases) {
  EXPECT_EQ(auc(std::vector<int>{1, 0}, std::vector<double>{0.9, 0.1}), 1.0);
  EXPECT_EQ(auc(std::vector<int>{1, 0}, std::vector<double>{0.1, 0.9}), 0.0);
  EXPECT_EQ(auc(std::vector<int>{1, 0, 1, 0}, std::vector<double>{0.3, 0.3, 0.3, 0.3}), 0.5);
  const std::vector<int> y{1, 0, 1, 1, 0, 0, 1};
  const std::vector<double> s{0.8, 0.4, 0.4, 0.9, 0.2, 0.8, 0.1};
  EXPECT_EQ(auc(y, s), *pairwise_auc(y, s));
}

TEST(Auc, SingleClassIsUndefined) {
  EXPECT_FALSE(try_auc(std::vector<int>{1, 1}, std::vector<double>{0.1, 0.2}));
  EXPECT_THROW(auc(std::vector<int>{0, 0, 0}, std::vector<double>{0.1, 0.2, 0.3}), ValueError);
  EXPECT_THROW(auc(std::vector<int>{0, 1}, std::vector<double>{0.1}), ShapeError);
}

TEST(Auc, MatchesPairwiseOracleExactly) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 499);
    std::vector<int> y(n);
    std::vector<double> s(n);
    const std::size_t levels = 1 + uniform_index(rng, 20);  // coarse scores force ties
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = uniform(rng, 0.0, 1.0) < 0.3 ? 1 : 0;
      s[i] = trial % 2 ? static_cast<double>(uniform_index(rng, levels)) : uniform(rng, -1.0, 1.0);
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_EQ(auc(y, s), *pairwise_auc(y, s)) << "n=" << n;
  }
}

TEST(Evaluate, ConstantScoresGiveHalf) {
  const auto ds = random_dataset(small_schema(), 200, 2);
  const auto r = evaluate_scores(ds, std::vector<double>(ds.size(), 0.7));
  ASSERT_TRUE(r.overall);
  EXPECT_EQ(*r.overall, 0.5);
  for (const auto& a : r.per_domain)
    if (a) {
      EXPECT_EQ(*a, 0.5);
    }
}

TEST(Evaluate, ShapeAndOverallOracle) {
  const auto ds = random_dataset(small_schema(), 200, 3);
  BaseDnn m(ds.schema, BaseModelConfig{.embedding_dim = 3, .hidden = {5}});
  const auto r = evaluate(m, ds);
  EXPECT_EQ(r.per_domain.size(), 3u);
  std::size_t total = 0;
  for (auto c : r.counts) total += c;
  EXPECT_EQ(total, ds.size());
  std::vector<int> y;
  for (const auto& s : ds.samples) y.push_back(s.label);
  EXPECT_EQ(*r.overall, *pairwise_auc(y, predict_all(m, ds)));
  EXPECT_EQ(r.model_fingerprint, m.fingerprint());
  EXPECT_THROW(evaluate(m, random_dataset(small_schema(2), 10, 1)), CompatibilityError);
}

TEST(Evaluate, SingleClassDomainIsNull) {
  auto ds = random_dataset(small_schema(), 60, 4);
  for (auto& s : ds.samples)
    if (s.domain == 1) s.label = 0;
  Rng rng(4);
  std::vector<double> scores(ds.size());
  for (auto& x : scores) x = uniform(rng, 0.0, 1.0);
  const auto r = evaluate_scores(ds, scores);
  EXPECT_FALSE(r.per_domain[1]);
  EXPECT_TRUE(r.per_domain[0]);
  EXPECT_TRUE(eval_to_json(r, ds.schema)["per_domain"][1]["auc"].is_null());
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto ds = random_dataset(small_schema(), 100, 5);
  BaseDnn m(ds.schema, BaseModelConfig{.embedding_dim = 3, .hidden = {5}});
  const auto before = m.fingerprint();
  const auto h = train(m, ds, MultiDomainDataset{}, TrainConfig{.batch_size = 100, .epochs = 3, .learning_rate = 0.0, .patience = 0});
  EXPECT_EQ(m.fingerprint(), before);
  ASSERT_EQ(h.batch_losses.size(), 3u);
  // Shuffling only reorders the summation.
  EXPECT_DOUBLE_EQ(h.batch_losses[0], h.batch_losses[1]);
  EXPECT_DOUBLE_EQ(h.batch_losses[1], h.batch_losses[2]);
}

TEST(Train, PooledLossEqualsRecombinedDomainSums) {
  const auto ds = random_dataset(small_schema(), 150, 6);
  BaseDnn m(ds.schema, BaseModelConfig{.embedding_dim = 3, .hidden = {5}, .seed = 6});
  Rng rng(6);
  for (auto* p : m.params()) init_uniform(p->value, rng, 0.5);
  std::vector<double> partial(3, 0.0);
  for (const auto& s : ds.samples) partial[s.domain] += bce(s.label, m.predict(s));
  const double expected = (partial[0] + partial[1] + partial[2]) / static_cast<double>(ds.size());
  const auto h = train(m, ds, MultiDomainDataset{}, TrainConfig{.batch_size = 150, .epochs = 1, .learning_rate = 0.0});
  EXPECT_NEAR(h.batch_losses[0], expected, 1e-12);
}

TEST(Train, SeparableDataReachesHighAuc) {
  const auto ds = separable(400, 7);
  BaseDnn m(ds.schema, BaseModelConfig{.embedding_dim = 4, .hidden = {8}, .seed = 7});
  const auto h = train(m, ds, MultiDomainDataset{}, TrainConfig{.batch_size = 16, .epochs = 20, .learning_rate = 0.01, .patience = 0});
  EXPECT_LE(h.steps, 500u);
  EXPECT_GT(*evaluate(m, ds).overall, 0.99);
}

TEST(Train, DeterministicGivenSeed) {
  const auto ds = separable(200, 8);
  const auto valid = [] {
    auto v = separable(80, 9);
    v.split = Split::Valid;
    return v;
  }();
  auto run = [&] {
    BaseDnn m(ds.schema, BaseModelConfig{.embedding_dim = 3, .hidden = {6}, .seed = 8});
    const auto h = train(m, ds, valid, TrainConfig{.batch_size = 32, .epochs = 4, .learning_rate = 0.01, .seed = 5});
    return std::make_pair(h.batch_losses, m.fingerprint());
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, RestoresBestValidationEpoch) {
  const auto ds = separable(200, 10);
  auto valid = separable(100, 11);
  valid.split = Split::Valid;
  BaseDnn m(ds.schema, BaseModelConfig{.embedding_dim = 3, .hidden = {6}, .seed = 9});
  const auto h = train(m, ds, valid, TrainConfig{.batch_size = 32, .epochs = 6, .learning_rate = 0.05, .patience = 0});
  double best = -1.0;
  for (const auto& e : h.epochs) best = std::max(best, *e.valid_auc);
  EXPECT_EQ(*h.epochs[h.best_epoch].valid_auc, best);
  EXPECT_EQ(*evaluate(m, valid).overall, best);
}

TEST(Train, NonFiniteLossReportsStep) {
  const auto ds = random_dataset(small_schema(), 50, 12);
  BaseDnn m(ds.schema, BaseModelConfig{.embedding_dim = 3, .hidden = {5}});
  m.tower().output_layer().bias.value.data[0] = std::nan("");
  try {
    train(m, ds, MultiDomainDataset{}, TrainConfig{.batch_size = 10});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos);
  }
}

TEST(Train, RejectsBadInput) {
  const auto ds = random_dataset(small_schema(), 20, 13);
  BaseDnn m(ds.schema, BaseModelConfig{.embedding_dim = 3, .hidden = {5}});
  MultiDomainDataset empty;
  empty.schema = ds.schema;
  EXPECT_THROW(train(m, empty, MultiDomainDataset{}, TrainConfig{}), ValueError);
  EXPECT_THROW(train(m, ds, MultiDomainDataset{}, TrainConfig{.batch_size = 0}), ConfigError);
  EXPECT_THROW(train(m, random_dataset(small_schema(2), 20, 1), MultiDomainDataset{}, TrainConfig{}), CompatibilityError);
}

TEST(Train, MemoryModelLearnsSeparableData) {
  const auto ds = separable(400, 14);
  MemoryModelConfig cfg;
  cfg.base = BaseModelConfig{.embedding_dim = 4, .hidden = {8, 4}, .seed = 14};
  cfg.emb_attn_dim = 4;
  cfg.hidden_attn_dim = 2;
  cfg.sensitive = {"site"};
  MemoryModel m(ds.schema, cfg);
  train(m, ds, MultiDomainDataset{}, TrainConfig{.batch_size = 16, .epochs = 20, .learning_rate = 0.01, .patience = 0});
  EXPECT_GT(*evaluate(m, ds).overall, 0.99);
}

TEST(Pipeline, RunsEndToEndWithLinkedFingerprints) {
  const auto cfg = small_experiment();
  const auto data = make_synthetic_datasets(cfg);
  const auto r = run_pipeline(cfg, data, cfg.seed);
  EXPECT_EQ(r.attribution.model_fingerprint, r.base.fingerprint());
  EXPECT_EQ(r.attribution.dataset_fingerprint, data.train.fingerprint());
  EXPECT_EQ(r.report.attribution_fingerprint, r.attribution.fingerprint());
  EXPECT_EQ(r.memory_eval.model_fingerprint, r.memory.fingerprint());
  EXPECT_EQ(r.memory.config().sensitive.size(), 3u);
  ASSERT_TRUE(r.memory_eval.overall);
  EXPECT_GT(*r.memory_eval.overall, 0.5);
  EXPECT_EQ(r.memory_eval.per_domain.size(), 4u);
}

TEST(Pipeline, ZeroTopKIsConfigError) {
  auto cfg = small_experiment();
  cfg.top_k = {{FeatureGroup::CategoricalScalar, 0}};
  const auto data = make_synthetic_datasets(cfg);
  EXPECT_THROW(run_pipeline(cfg, data, cfg.seed), ConfigError);
  EXPECT_THROW(run_ablation_study(cfg, data), ConfigError);
}

TEST(Pipeline, CachedAttributionGivesIdenticalReport) {
  auto cfg = small_experiment();
  cfg.train.epochs = 1;
  const auto data = make_synthetic_datasets(cfg);
  const auto first = run_pipeline(cfg, data, cfg.seed);
  const auto second = run_pipeline(cfg, data, cfg.seed, &first.attribution);
  EXPECT_EQ(second.report.fingerprint(), first.report.fingerprint());
  EXPECT_EQ(second.memory.fingerprint(), first.memory.fingerprint());
}

TEST(Study, FullVariantEqualsPipelineMemoryModel) {
  const auto cfg = small_experiment();
  const auto data = make_synthetic_datasets(cfg);
  const auto pipe = run_pipeline(cfg, data, cfg.seed);
  const auto study = run_ablation_study(cfg, data);
  ASSERT_EQ(study.variants.size(), 4u);
  const auto& full = study.runs.at("full").at(0);
  EXPECT_EQ(full.model_fingerprint, pipe.memory.fingerprint());
  EXPECT_EQ(full.overall, pipe.memory_eval.overall);
  EXPECT_EQ(study.runs.at("w/o emb_attn").size(), 1u);
  const auto table = format_study_table(study, data.train.schema);
  EXPECT_NE(table.find("Overall"), std::string::npos);
  EXPECT_NE(table.find("w/o aux_logit"), std::string::npos);
}

TEST(Study, SelectionsCoincideWhenGroupHasExactlyK) {
  auto cfg = small_experiment();
  cfg.train.epochs = 1;
  cfg.top_k = {{FeatureGroup::CategoricalScalar, 6}};
  const auto data = make_synthetic_datasets(cfg);
  const auto r = run_selection_study(cfg, data, {Selection::TopK, Selection::LastK, Selection::AllFeat});
  ASSERT_EQ(r.runs.size(), 3u);
  EXPECT_EQ(r.runs.at("top-k")[0].overall, r.runs.at("last-k")[0].overall);
  EXPECT_EQ(r.runs.at("top-k")[0].model_fingerprint, r.runs.at("last-k")[0].model_fingerprint);
  const auto j = study_to_json(r, data.train.schema);
  EXPECT_EQ(j["variants"].size(), 3u);
}

TEST(Study, RequiresTestSplit) {
  auto cfg = small_experiment();
  cfg.test_samples = 0;
  EXPECT_THROW(run_ablation_study(cfg, make_synthetic_datasets(cfg)), ConfigError);
}

TEST(Checkpoint, BaseRoundTripIsExact) {
  const auto ds = random_dataset(small_schema(), 30, 15);
  BaseDnn m(ds.schema, BaseModelConfig{.embedding_dim = 3, .hidden = {5, 4}, .seed = 15});
  const auto j = nlohmann::json::parse(base_checkpoint(m).dump());
  const BaseDnn back = base_from_checkpoint(j, &ds.schema);
  EXPECT_EQ(back.fingerprint(), m.fingerprint());
  for (const auto& s : ds.samples) EXPECT_EQ(back.predict(s), m.predict(s));
  const auto other = small_schema(2);
  EXPECT_THROW(base_from_checkpoint(j, &other), CompatibilityError);
  EXPECT_THROW(memory_from_checkpoint(j), CompatibilityError);
  auto tampered = j;
  tampered["params"]["base.out.b"]["data"][0] = 1.0;
  EXPECT_THROW(base_from_checkpoint(tampered), CompatibilityError);
}

TEST(Checkpoint, MemoryRoundTripIsExact) {
  const auto ds = random_dataset(small_schema(), 30, 16);
  MemoryModelConfig cfg;
  cfg.base = BaseModelConfig{.embedding_dim = 3, .hidden = {5, 4}, .seed = 16};
  cfg.sensitive = {"hist"};
  cfg.kernel = AttentionKernel::Softmax;
  cfg.use_hidden_attn = false;
  MemoryModel m(ds.schema, cfg);
  const MemoryModel back = memory_from_checkpoint(nlohmann::json::parse(memory_checkpoint(m).dump()));
  EXPECT_EQ(back.fingerprint(), m.fingerprint());
  EXPECT_EQ(back.config().kernel, AttentionKernel::Softmax);
  EXPECT_FALSE(back.config().use_hidden_attn);
  for (const auto& s : ds.samples) EXPECT_EQ(back.predict(s), m.predict(s));
}

TEST(Config, ExperimentJsonRoundTrip) {
  const auto cfg = small_experiment();
  const auto back = experiment_config_from_json(nlohmann::json::parse(cfg.to_json().dump()));
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_THROW(experiment_config_from_json({{"train", {{"epochs", 0}}}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json({{"ig", {{"steps", 0}}}}), ConfigError);
  EXPECT_THROW(experiment_config_from_json({{"memory", {{"kernel", "cosine"}}}}).memory(), ConfigError);
}
