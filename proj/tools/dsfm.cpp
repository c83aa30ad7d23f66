// dsfm: command-line front end. One subcommand per invocation; every
// successful run writes a manifest next to its primary output.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "dsfm/dsfm.hpp"

namespace fs = std::filesystem;
using namespace dsfm;
using nlohmann::json;

namespace {

struct Options {
  std::string config, out, data, valid, test, schema, checkpoint, attribution, report;
  std::uint64_t seed = 0;
  std::size_t threads = 0, ig_steps = 0;
  std::size_t k_cat = 0, k_cat_seq = 0, k_num = 0, k_num_seq = 0;
  std::string kernel, weight_mode;
  bool no_emb_attn = false, no_hidden_attn = false, no_aux_logit = false;
  std::vector<std::string> sensitive, variants;
  std::string sub;
  CLI::App* cmd = nullptr;

  bool given(const char* flag) const {
    const auto* opt = cmd ? cmd->get_option_no_throw(flag) : nullptr;
    return opt && opt->count() > 0;
  }
};

// Content hash of a file, or of each regular file under a directory.
std::string file_fingerprint(const std::string& path) {
  Fnv1a h;
  auto feed = [&](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    h.update(ss.str());
  };
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      h.update(f.filename().string());
      feed(f);
    }
  } else {
    feed(path);
  }
  return to_hex(h.digest());
}

class Run {
 public:
  explicit Run(const Options& o) : o_(o), start_(std::chrono::steady_clock::now()) {}

  void input(const std::string& role, const std::string& path, std::uint64_t semantic = 0) {
    json j{{"path", path}, {"content_fingerprint", file_fingerprint(path)}};
    if (semantic) j["fingerprint"] = to_hex(semantic);
    inputs_[role] = j;
  }
  void output(const std::string& path) { outputs_.push_back(path); }
  void note(const std::string& key, json v) { extra_[key] = std::move(v); }

  void finish(const std::string& manifest_path, const ExperimentConfig& cfg) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json outs = json::array();
    for (const auto& p : outputs_) outs.push_back({{"path", p}, {"content_fingerprint", file_fingerprint(p)}});
    json m{{"tool", "dsfm"},
           {"version", kVersion},
           {"subcommand", o_.sub},
           {"seed", cfg.seed},
           {"config", cfg.to_json()},
           {"inputs", inputs_},
           {"outputs", outs},
           {"duration_seconds", secs}};
    for (const auto& [k, v] : extra_.items()) m[k] = v;
    write_json_file(manifest_path, m);
    std::cerr << "manifest: " << manifest_path << '\n';
  }

 private:
  const Options& o_;
  std::chrono::steady_clock::time_point start_;
  json inputs_ = json::object();
  json extra_ = json::object();
  std::vector<std::string> outputs_;
};

std::string manifest_for(const std::string& out) {
  return fs::is_directory(out) ? (fs::path(out) / "manifest.json").string() : out + ".manifest.json";
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " is required");
  if (!fs::exists(path)) throw StateError("missing " + what + " '" + path + "'");
}

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig cfg;
  if (!o.config.empty()) cfg = experiment_config_from_json(read_json_file(o.config));
  if (o.given("--seed")) cfg.seed = o.seed;
  if (o.given("--threads")) cfg.threads = std::max<std::size_t>(o.threads, 1);
  if (o.given("--ig-steps")) {
    cfg.ig.steps = o.ig_steps;
    cfg.ig.validate();
  }
  if (o.given("--weight-mode")) cfg.weight_mode = parse_weight_mode(o.weight_mode);
  if (o.given("--top-k-categorical")) cfg.top_k[FeatureGroup::CategoricalScalar] = o.k_cat;
  if (o.given("--top-k-categorical-seq")) cfg.top_k[FeatureGroup::CategoricalSequential] = o.k_cat_seq;
  if (o.given("--top-k-numerical")) cfg.top_k[FeatureGroup::NumericalScalar] = o.k_num;
  if (o.given("--top-k-numerical-seq")) cfg.top_k[FeatureGroup::NumericalSequential] = o.k_num_seq;
  if (o.given("--kernel")) cfg.memory_section["kernel"] = to_string(parse_kernel(o.kernel));
  if (o.no_emb_attn) cfg.memory_section["use_emb_attn"] = false;
  if (o.no_hidden_attn) cfg.memory_section["use_hidden_attn"] = false;
  if (o.no_aux_logit) cfg.memory_section["use_aux_logit"] = false;
  cfg.memory();  // validates the section
  return cfg;
}

json load_checkpoint(const std::string& path) {
  require_file(path, "checkpoint");
  try {
    return read_json_file(path);
  } catch (const ConfigError& e) {
    throw ParseError(e.what());
  }
}

// Schema precedence: --schema, --checkpoint, <data>.schema.json, config.
FeatureSchema resolve_schema(const Options& o, const ExperimentConfig& cfg) {
  if (!o.schema.empty()) return schema_from_json(read_json_file(o.schema));
  if (!o.checkpoint.empty()) return schema_from_json(load_checkpoint(o.checkpoint).at("schema"));
  if (!o.data.empty() && fs::exists(o.data + ".schema.json")) return schema_from_json(read_json_file(o.data + ".schema.json"));
  if (cfg.schema) return *cfg.schema;
  if (cfg.synthetic) return cfg.synthetic->schema();
  throw ConfigError("no schema: pass --schema, --checkpoint, or a config with a 'schema' or 'synthetic' section");
}

MultiDomainDataset load_split(const std::string& path, const FeatureSchema& schema, Split split, Run& run) {
  require_file(path, std::string(to_string(split)) + " data file");
  auto ds = load_csv(path, schema, split);
  run.input(to_string(split), path, ds.fingerprint());
  return ds;
}

// --data is the training split; --valid/--test are optional and reuse the
// schema the training split was encoded with.
Datasets load_datasets(const Options& o, const ExperimentConfig& cfg, Run& run) {
  Datasets d;
  d.train = load_split(o.data, resolve_schema(o, cfg), Split::Train, run);
  d.valid.schema = d.test.schema = d.train.schema;
  d.valid.split = Split::Valid;
  d.test.split = Split::Test;
  if (!o.valid.empty()) d.valid = load_split(o.valid, d.train.schema, Split::Valid, run);
  if (!o.test.empty()) d.test = load_split(o.test, d.train.schema, Split::Test, run);
  return d;
}

std::string opt_auc(const std::optional<double>& x) {
  if (!x) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *x);
  return buf;
}

void print_eval(const EvalReport& r, const FeatureSchema& schema) {
  std::printf("%-10s %10s %8s\n", "Domain", "Count", "AUC");
  for (std::size_t k = 0; k < r.per_domain.size(); ++k)
    std::printf("%-10s %10zu %8s\n", schema.domain_label(k).c_str(), r.counts[k], opt_auc(r.per_domain[k]).c_str());
  std::printf("%-10s %10zu %8s\n", "Overall", std::accumulate(r.counts.begin(), r.counts.end(), std::size_t{0}),
              opt_auc(r.overall).c_str());
}

void print_report(const SensitivityReport& r) {
  std::printf("%-24s %-24s %5s %12s %s\n", "Feature", "Group", "Rank", "DS", "Selected");
  for (const auto& [g, idx] : r.ranking)
    for (auto j : idx) {
      const auto& f = r.features[j];
      std::printf("%-24s %-24s %5zu %12.6f %s\n", f.name.c_str(), to_string(g), f.rank, f.score, f.selected ? "*" : "");
    }
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
}

void print_flops(const FlopsReport& r) {
  std::printf("%-16s %16s\n", "Block", "FLOPs");
  std::printf("%-16s %16llu\n", "embeddings", static_cast<unsigned long long>(r.embeddings));
  std::printf("%-16s %16llu\n", "base_tower", static_cast<unsigned long long>(r.base_tower));
  std::printf("%-16s %16llu\n", "extractor", static_cast<unsigned long long>(r.extractor));
  for (const auto& rt : r.retrievers)
    std::printf("%-16s %16llu\n", ("retriever." + rt.site).c_str(), static_cast<unsigned long long>(rt.total()));
  std::printf("%-16s %16llu\n", "total", static_cast<unsigned long long>(r.total()));
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_gen_data(const Options& o) {
  Run run(o);
  auto cfg = resolve_config(o);
  if (!cfg.synthetic) throw ConfigError("gen-data needs a config with a 'synthetic' section");
  if (o.given("--seed")) cfg.synthetic->seed = o.seed;
  const std::string out = o.out.empty() ? "data.csv" : o.out;
  const fs::path p(out);
  const std::string stem = (p.parent_path() / p.stem()).string();
  auto write = [&](Split split, std::size_t n, const std::string& path) {
    const auto ds = generate_synthetic(*cfg.synthetic, split, n);
    write_csv(path, ds);
    run.output(path);
    std::printf("%-6s %8zu rows -> %s\n", to_string(split), ds.size(), path.c_str());
    return ds;
  };
  const auto train = write(Split::Train, cfg.train_samples, out);
  if (cfg.valid_samples) write(Split::Valid, cfg.valid_samples, stem + ".valid.csv");
  if (cfg.test_samples) write(Split::Test, cfg.test_samples, stem + ".test.csv");
  write_json_file(out + ".schema.json", schema_to_json(train.schema));
  run.output(out + ".schema.json");
  run.finish(manifest_for(out), cfg);
}

void cmd_train_base(const Options& o) {
  Run run(o);
  const auto cfg = resolve_config(o);
  const auto data = load_datasets(o, cfg, run);
  TrainHistory hist;
  const BaseDnn model = train_base_model(cfg, data, cfg.seed, &hist);
  const std::string out = o.out.empty() ? "base.ckpt.json" : o.out;
  write_json_file(out, base_checkpoint(model));
  run.output(out);
  run.note("model_fingerprint", to_hex(model.fingerprint()));
  run.note("history", history_to_json(hist));
  std::printf("trained base model %s (%zu steps, best epoch %zu) -> %s\n", to_hex(model.fingerprint()).c_str(), hist.steps,
              hist.best_epoch, out.c_str());
  run.finish(manifest_for(out), cfg);
}

void cmd_attribute(const Options& o) {
  Run run(o);
  const auto cfg = resolve_config(o);
  const auto ckpt = load_checkpoint(o.checkpoint);
  const BaseDnn model = base_from_checkpoint(ckpt);
  run.input("checkpoint", o.checkpoint, model.fingerprint());
  const auto ds = load_split(o.data, model.schema(), Split::Train, run);
  const auto a = attribute_dataset(model, ds, cfg.ig, cfg.threads);
  const std::string out = o.out.empty() ? "attribution.bin" : o.out;
  save_attribution(out, a);
  run.output(out);
  run.note("attribution_fingerprint", to_hex(a.fingerprint()));
  std::printf("attribution %zu x %zu (T=%zu) %s -> %s\n", a.rows, a.cols, a.steps, to_hex(a.fingerprint()).c_str(),
              out.c_str());
  run.finish(manifest_for(out), cfg);
}

void cmd_rank(const Options& o) {
  Run run(o);
  const auto cfg = resolve_config(o);
  const std::string attr_path = o.attribution.empty() ? "attribution.bin" : o.attribution;
  if (!fs::exists(attr_path))
    throw StateError("missing attribution file '" + attr_path + "'; run 'dsfm attribute' first");
  const auto a = load_attribution(attr_path);
  run.input("attribution", attr_path, a.fingerprint());
  const auto ds = load_split(o.data, resolve_schema(o, cfg), Split::Train, run);
  if (a.dataset_fingerprint != ds.fingerprint())
    throw CompatibilityError("attribution '" + attr_path + "' was computed on dataset " + to_hex(a.dataset_fingerprint) +
                             ", but --data has fingerprint " + to_hex(ds.fingerprint()));
  if (!o.checkpoint.empty()) {
    const auto model = base_from_checkpoint(load_checkpoint(o.checkpoint));
    if (model.fingerprint() != a.model_fingerprint)
      throw CompatibilityError("attribution '" + attr_path + "' expects model " + to_hex(a.model_fingerprint) +
                               ", checkpoint has " + to_hex(model.fingerprint()));
  }
  const auto report = rank_features(ds, a, cfg.top_k, cfg.weight_mode);
  const std::string out = o.out.empty() ? "report.json" : o.out;
  write_json_file(out, report_to_json(report));
  run.output(out);
  print_report(report);
  run.note("report_fingerprint", to_hex(report.fingerprint()));
  run.finish(manifest_for(out), cfg);
}

std::vector<std::string> sensitive_from(const Options& o, const ExperimentConfig& cfg, const FeatureSchema& schema,
                                        Run& run) {
  if (!o.sensitive.empty()) return o.sensitive;
  if (!o.report.empty()) {
    require_file(o.report, "sensitivity report");
    const auto r = report_from_json(read_json_file(o.report));
    run.input("report", o.report, r.fingerprint());
    return select_features(r, schema, cfg.top_k, Selection::TopK);
  }
  const auto mem = cfg.memory();
  if (!mem.sensitive.empty()) return mem.sensitive;
  throw ConfigError("no domain-sensitive features: pass --report, --sensitive, or memory.sensitive in the config");
}

void cmd_train_memory(const Options& o) {
  Run run(o);
  const auto cfg = resolve_config(o);
  const auto data = load_datasets(o, cfg, run);
  auto names = sensitive_from(o, cfg, data.train.schema, run);
  MemoryModel model = build_memory_model(cfg, data.train.schema, names, cfg.seed);
  TrainHistory hist;
  train_memory_model(model, cfg, data, cfg.seed, &hist);
  const std::string out = o.out.empty() ? "memory.ckpt.json" : o.out;
  write_json_file(out, memory_checkpoint(model));
  run.output(out);
  run.note("model_fingerprint", to_hex(model.fingerprint()));
  run.note("sensitive", names);
  run.note("history", history_to_json(hist));
  std::printf("trained memory model %s on %zu sensitive features (%zu steps) -> %s\n",
              to_hex(model.fingerprint()).c_str(), names.size(), hist.steps, out.c_str());
  run.finish(manifest_for(out), cfg);
}

void cmd_evaluate(const Options& o) {
  Run run(o);
  const auto cfg = resolve_config(o);
  const auto ckpt = load_checkpoint(o.checkpoint);
  const auto type = checkpoint_type(ckpt);
  const std::string data_path = o.test.empty() ? o.data : o.test;
  EvalReport r;
  FeatureSchema schema;
  if (type == "memory") {
    const auto m = memory_from_checkpoint(ckpt);
    run.input("checkpoint", o.checkpoint, m.fingerprint());
    schema = m.schema();
    r = evaluate(m, load_split(data_path, schema, Split::Test, run));
  } else {
    const auto m = base_from_checkpoint(ckpt);
    run.input("checkpoint", o.checkpoint, m.fingerprint());
    schema = m.schema();
    r = evaluate(m, load_split(data_path, schema, Split::Test, run));
  }
  print_eval(r, schema);
  const std::string out = o.out.empty() ? "eval.json" : o.out;
  auto j = eval_to_json(r, schema);
  j["model_type"] = type;
  write_json_file(out, j);
  run.output(out);
  run.finish(manifest_for(out), cfg);
}

Datasets study_data(const Options& o, const ExperimentConfig& cfg, Run& run) {
  if (!o.data.empty()) return load_datasets(o, cfg, run);
  return make_synthetic_datasets(cfg);
}

void finish_study(const Options& o, const ExperimentConfig& cfg, const Datasets& data, const StudyResult& r, Run& run,
                  const char* default_out) {
  std::fputs(format_study_table(r, data.train.schema).c_str(), stdout);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  const std::string out = o.out.empty() ? default_out : o.out;
  write_json_file(out, study_to_json(r, data.train.schema));
  run.output(out);
  run.finish(manifest_for(out), cfg);
}

void cmd_study_selection(const Options& o) {
  Run run(o);
  const auto cfg = resolve_config(o);
  const auto data = study_data(o, cfg, run);
  std::vector<Variant> vs;
  for (const auto& name : o.variants) {
    if (name == "shared") vs.push_back(Variant{.name = "shared", .baseline = true});
    else {
      const auto s = parse_selection(name);
      vs.push_back(Variant{.name = to_string(s), .selection = s});
    }
  }
  finish_study(o, cfg, data, run_study(cfg, data, vs), run, "study_selection.json");
}

void cmd_study_ablation(const Options& o) {
  Run run(o);
  const auto cfg = resolve_config(o);
  const auto data = study_data(o, cfg, run);
  finish_study(o, cfg, data, run_ablation_study(cfg, data), run, "study_ablation.json");
}

void cmd_flops(const Options& o) {
  Run run(o);
  const auto cfg = resolve_config(o);
  auto mc = cfg.memory();
  const auto schema = resolve_schema(o, cfg);
  if (!o.sensitive.empty()) mc.sensitive = o.sensitive;
  else if (!o.report.empty()) mc.sensitive = sensitive_from(o, cfg, schema, run);
  if (mc.sensitive.empty()) {
    // Without a ranking, count as many features per group as top-k asks for.
    for (const auto& [g, k] : cfg.top_k) {
      std::size_t taken = 0;
      for (const auto& f : schema.features)
        if (f.group() == g && taken < k) mc.sensitive.push_back(f.name), ++taken;
    }
    run.note("sensitive_source", "first top-k features per group in schema order");
  }
  run.note("sensitive", mc.sensitive);
  const auto report = count_flops(mc, flops_shape(schema, mc.base.include_domain));
  print_flops(report);
  auto j = flops_to_json(report);
  j["sensitive_count"] = mc.sensitive.size();
  const std::string out = o.out.empty() ? "flops.json" : o.out;
  write_json_file(out, j);
  run.output(out);
  run.finish(manifest_for(out), cfg);
}

void cmd_export_dists(const Options& o) {
  Run run(o);
  const auto cfg = resolve_config(o);
  require_file(o.report, "sensitivity report");
  const auto report = report_from_json(read_json_file(o.report));
  run.input("report", o.report, report.fingerprint());
  const auto schema = resolve_schema(o, cfg);
  const std::string out = o.out.empty() ? "dists" : o.out;
  fs::create_directories(out);
  const auto paths = write_distribution_csvs(out, schema, report);
  for (const auto& p : paths) std::printf("%s\n", p.c_str());
  run.output(out);
  run.finish(manifest_for(out), cfg);
}

// ---------------------------------------------------------------------------

void add_common(CLI::App* c, Options& o) {
  c->add_option("--config", o.config, "Experiment config (JSON)")->envname("DSFM_CONFIG");
  c->add_option("--seed", o.seed, "Run seed; overrides the config")->envname("DSFM_SEED");
  c->add_option("--threads", o.threads, "Worker threads")->envname("DSFM_THREADS");
  c->add_option("--out", o.out, "Output path")->envname("DSFM_OUT");
}

void add_data(CLI::App* c, Options& o, bool splits) {
  c->add_option("--data", o.data, "Training CSV")->envname("DSFM_DATA");
  c->add_option("--schema", o.schema, "Schema JSON (default: <data>.schema.json)")->envname("DSFM_SCHEMA");
  if (splits) {
    c->add_option("--valid", o.valid, "Validation CSV")->envname("DSFM_VALID");
    c->add_option("--test", o.test, "Test CSV")->envname("DSFM_TEST");
  }
}

void add_top_k(CLI::App* c, Options& o) {
  c->add_option("--top-k-categorical", o.k_cat, "Top-k for categorical scalar features");
  c->add_option("--top-k-categorical-seq", o.k_cat_seq, "Top-k for categorical sequential features");
  c->add_option("--top-k-numerical", o.k_num, "Top-k for numerical scalar features");
  c->add_option("--top-k-numerical-seq", o.k_num_seq, "Top-k for numerical sequential features");
}

void add_memory(CLI::App* c, Options& o) {
  c->add_option("--kernel", o.kernel, "Attention kernel")->check(CLI::IsMember({"linear", "softmax"}));
  c->add_flag("--no-emb-attn", o.no_emb_attn, "Disable the embedding-level retriever");
  c->add_flag("--no-hidden-attn", o.no_hidden_attn, "Disable the hidden-layer retrievers");
  c->add_flag("--no-aux-logit", o.no_aux_logit, "Drop the extractor's auxiliary logit");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-sensitive feature selection and memory models for multi-domain CTR data", "dsfm"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic planted dataset (train/valid/test CSV + schema)");
  add_common(gen, o);

  auto* tb = app.add_subcommand("train-base", "Train the shared base DNN");
  add_common(tb, o);
  add_data(tb, o, true);

  auto* at = app.add_subcommand("attribute", "Integrated-gradients attribution of a base checkpoint");
  add_common(at, o);
  add_data(at, o, false);
  at->add_option("--checkpoint", o.checkpoint, "Base checkpoint")->envname("DSFM_CHECKPOINT");
  at->add_option("--ig-steps", o.ig_steps, "Riemann steps T")->envname("DSFM_IG_STEPS");

  auto* rk = app.add_subcommand("rank", "Rank features by domain sensitivity");
  add_common(rk, o);
  add_data(rk, o, false);
  rk->add_option("--attribution", o.attribution, "Attribution file (default attribution.bin)")->envname("DSFM_ATTRIBUTION");
  rk->add_option("--checkpoint", o.checkpoint, "Base checkpoint (checks the attribution's model)");
  rk->add_option("--weight-mode", o.weight_mode, "abs | raw-with-clamp-at-zero");
  add_top_k(rk, o);

  auto* tm = app.add_subcommand("train-memory", "Train the domain-sensitive feature memory model");
  add_common(tm, o);
  add_data(tm, o, true);
  tm->add_option("--checkpoint", o.checkpoint, "Base checkpoint supplying the schema");
  tm->add_option("--report", o.report, "Sensitivity report from 'rank'")->envname("DSFM_REPORT");
  tm->add_option("--sensitive", o.sensitive, "Explicit sensitive feature names")->delimiter(',');
  add_top_k(tm, o);
  add_memory(tm, o);

  auto* ev = app.add_subcommand("evaluate", "Overall and per-domain AUC of a checkpoint");
  add_common(ev, o);
  ev->add_option("--checkpoint", o.checkpoint, "Base or memory checkpoint")->envname("DSFM_CHECKPOINT");
  ev->add_option("--data", o.data, "Evaluation CSV")->envname("DSFM_DATA");
  ev->add_option("--test", o.test, "Evaluation CSV (alias of --data)");

  auto* ss = app.add_subcommand("study-selection", "Compare shared / top-k / last-k / all-feat over seeds");
  add_common(ss, o);
  add_data(ss, o, true);
  ss->add_option("--variants", o.variants, "Variants: shared,top-k,last-k,all-feat")
      ->delimiter(',')
      ->default_str("shared,top-k,last-k");
  ss->add_option("--ig-steps", o.ig_steps, "Riemann steps T");
  add_top_k(ss, o);
  add_memory(ss, o);

  auto* sa = app.add_subcommand("study-ablation", "Full model against each single ablation over seeds");
  add_common(sa, o);
  add_data(sa, o, true);
  sa->add_option("--ig-steps", o.ig_steps, "Riemann steps T");
  add_top_k(sa, o);
  sa->add_option("--kernel", o.kernel, "Attention kernel")->check(CLI::IsMember({"linear", "softmax"}));

  auto* fl = app.add_subcommand("flops", "Per-example FLOPs of the memory model");
  add_common(fl, o);
  fl->add_option("--schema", o.schema, "Schema JSON");
  fl->add_option("--checkpoint", o.checkpoint, "Checkpoint supplying the schema");
  fl->add_option("--report", o.report, "Sensitivity report for the sensitive set");
  fl->add_option("--sensitive", o.sensitive, "Explicit sensitive feature names")->delimiter(',');
  add_top_k(fl, o);
  add_memory(fl, o);

  auto* ex = app.add_subcommand("export-dists", "Write per-feature per-domain distribution CSVs");
  add_common(ex, o);
  ex->add_option("--report", o.report, "Sensitivity report from 'rank'")->envname("DSFM_REPORT");
  ex->add_option("--schema", o.schema, "Schema JSON");
  ex->add_option("--checkpoint", o.checkpoint, "Checkpoint supplying the schema");
  ex->add_option("--data", o.data, "Training CSV (for <data>.schema.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 1;
  }

  o.cmd = app.get_subcommands().front();
  o.sub = o.cmd->get_name();
  if (o.variants.empty()) o.variants = {"shared", "top-k", "last-k"};
  try {
    if (o.sub == "gen-data") cmd_gen_data(o);
    else if (o.sub == "train-base") cmd_train_base(o);
    else if (o.sub == "attribute") cmd_attribute(o);
    else if (o.sub == "rank") cmd_rank(o);
    else if (o.sub == "train-memory") cmd_train_memory(o);
    else if (o.sub == "evaluate") cmd_evaluate(o);
    else if (o.sub == "study-selection") cmd_study_selection(o);
    else if (o.sub == "study-ablation") cmd_study_ablation(o);
    else if (o.sub == "flops") cmd_flops(o);
    else if (o.sub == "export-dists") cmd_export_dists(o);
  } catch (const std::exception& e) {
    std::cerr << "dsfm " << o.sub << ": error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
