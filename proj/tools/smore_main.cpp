#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "smore/dataset.hpp"
#include "smore/diagnostics.hpp"
#include "smore/error.hpp"
#include "smore/eval.hpp"
#include "smore/features.hpp"
#include "smore/graphs.hpp"
#include "smore/model.hpp"
#include "smore/trainer.hpp"

namespace fs = std::filesystem;
using namespace smore;

namespace {

uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot hash missing file: " + path);
  uint64_t h = 14695981039346656037ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf), in.gcount() > 0)
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  return h;
}

std::string hex64(uint64_t x) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

struct DataDir {
  Dataset ds;
  FeatureMatrix visual, text;
};

DataDir load_data_dir(const std::string& dir) {
  DataDir d;
  d.ds = Dataset::load((fs::path(dir) / "dataset.bin").string());
  try {
    d.visual = load_features((fs::path(dir) / "features_visual.bin").string(), 'v', d.ds);
  } catch (const DataError& e) {
    throw DataError(std::string("visual features: ") + e.what());
  }
  try {
    d.text = load_features((fs::path(dir) / "features_text.bin").string(), 't', d.ds);
  } catch (const DataError& e) {
    throw DataError(std::string("text features: ") + e.what());
  }
  return d;
}

ItemGraphs graphs_for(const DataDir& d, const ModelConfig& cfg, const std::string& dir,
                      bool rebuild) {
  const std::string cache =
      (fs::path(dir) / ("graphs_k" + std::to_string(cfg.knn_k_visual) + "_k" +
                        std::to_string(cfg.knn_k_text) + ".bin"))
          .string();
  return load_or_build_item_graphs(d.ds, d.visual, d.text, cfg.knn_k_visual,
                                   cfg.knn_k_text, cache, rebuild);
}

void dump_spectra(const std::string& dir, const ModelInputs& in, ParamStore& ps,
                  const ModelConfig& cfg) {
  fs::create_directories(dir);
  Tape t;
  const ForwardIds f = model_forward(t, in, ps, cfg);
  const auto write_csv = [&](Tape::Id id, const std::string& name) {
    if (id < 0) return;
    const std::vector<double>& v = t.val(id);  // interleaved complex, n x bins
    const std::size_t bins = v.size() / (2 * in.items);
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    for (std::size_t r = 0; r < in.items; ++r) {
      for (std::size_t k = 0; k < bins; ++k) {
        const double re = v[2 * (r * bins + k)], im = v[2 * (r * bins + k) + 1];
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", std::sqrt(re * re + im * im));
        out << (k ? "," : "") << buf;
      }
      out << "\n";
    }
  };
  write_csv(f.spec_visual, "spectrum_visual.csv");
  write_csv(f.spec_text, "spectrum_text.csv");
  write_csv(f.spec_fused, "spectrum_fused.csv");
  log_info("wrote magnitude spectra to " + dir);
}

// ---- subcommands -------------------------------------------------------------

struct PrepareArgs {
  std::string interactions, visual, text, out;
  std::string user_col = "user_id", item_col = "item_id";
  int k_core = 5;
  bool global_split = false;
};

int cmd_prepare(const PrepareArgs& a, uint64_t seed) {
  RawInteractions raw = load_interactions(a.interactions, {a.user_col, a.item_col});
  log_info("loaded " + std::to_string(raw.events.size()) + " unique events");
  raw = kcore_filter(raw, a.k_core);
  const Dataset ds = split(raw, SplitRatios{}, seed, a.global_split);

  FeatureMatrix fv, ft;
  try {
    fv = load_features(a.visual, 'v', ds);
  } catch (const DataError& e) {
    throw DataError(std::string("visual features: ") + e.what());
  }
  try {
    ft = load_features(a.text, 't', ds);
  } catch (const DataError& e) {
    throw DataError(std::string("text features: ") + e.what());
  }

  fs::create_directories(a.out);
  ds.save((fs::path(a.out) / "dataset.bin").string());
  save_features_binary((fs::path(a.out) / "features_visual.bin").string(), fv);
  save_features_binary((fs::path(a.out) / "features_text.bin").string(), ft);

  nlohmann::ordered_json stats;
  stats["users"] = ds.num_users();
  stats["items"] = ds.num_items();
  stats["events"] = ds.train.size() + ds.val.size() + ds.test.size();
  stats["train"] = ds.train.size();
  stats["val"] = ds.val.size();
  stats["test"] = ds.test.size();
  stats["k_core"] = a.k_core;
  stats["seed"] = seed;
  stats["split"] = a.global_split ? "global" : "per_user";
  stats["dataset_hash"] = hex64(ds.content_hash());
  const std::string text = stats.dump(2) + "\n";
  write_file(fs::path(a.out) / "stats.json", text);
  std::cout << text;
  log_info("prepared dataset: " + std::to_string(ds.num_users()) + " users, " +
           std::to_string(ds.num_items()) + " items");
  return 0;
}

struct TrainArgs {
  std::string data, config, out, dump_spectrum;
  bool rebuild_graphs = false;
  bool dry_run = false;
};

int cmd_train(const TrainArgs& a, bool seed_set, uint64_t seed) {
  ModelConfig cfg = ModelConfig::from_file(a.config);
  cfg.apply_env();
  if (seed_set) cfg.seed = seed;
  cfg.validate();

  const DataDir d = load_data_dir(a.data);
  const ItemGraphs graphs = graphs_for(d, cfg, a.data, a.rebuild_graphs);
  if (a.dry_run) {
    log_info("dry run: config and graphs are valid; skipping training");
    return 0;
  }

  const std::string run_dir =
      a.out.empty() ? "runs/" + utc_now() + "-seed" + std::to_string(cfg.seed) : a.out;
  fs::create_directories(run_dir);

  nlohmann::ordered_json manifest;
  manifest["command"] = "train";
  manifest["created_utc"] = utc_now();
  manifest["seed"] = cfg.seed;
  manifest["dataset_hash"] = hex64(d.ds.content_hash());
  manifest["inputs"] = {
      {"dataset", hex64(fnv1a_file((fs::path(a.data) / "dataset.bin").string()))},
      {"features_visual",
       hex64(fnv1a_file((fs::path(a.data) / "features_visual.bin").string()))},
      {"features_text",
       hex64(fnv1a_file((fs::path(a.data) / "features_text.bin").string()))},
      {"config", hex64(fnv1a_file(a.config))}};
  manifest["config"] = cfg.to_text();
  write_file(fs::path(run_dir) / "manifest.json", manifest.dump(2) + "\n");

  const ModelInputs in = make_model_inputs(d.ds, d.visual, d.text, graphs);
  ParamStore ps;
  Rng prng = Rng(cfg.seed).fork(0);
  init_model_params(ps, cfg, in.dims(), prng);
  log_info("training on " + std::to_string(in.users) + " users / " +
           std::to_string(in.items) + " items, " + std::to_string(ps.total_storage()) +
           " parameters");

  std::ofstream log_out(fs::path(run_dir) / "train_log.jsonl", std::ios::binary);
  const FitResult res = fit(d.ds, in, ps, cfg, [&](const EpochLog& e) {
    const std::string line = e.to_json();
    std::cout << line << "\n";
    log_out << line << "\n";
    log_out.flush();
  });
  log_out.close();

  save_checkpoint((fs::path(run_dir) / "checkpoint.bin").string(), ps, cfg, in.dims());
  if (res.aborted_non_finite) {
    log_error("training aborted on non-finite loss; best checkpoint saved to " + run_dir);
    return 3;
  }

  const MetricsReport rep = evaluate_split(in, ps, cfg, d.ds, "test", {10, 20});
  const std::string text = rep.to_json();
  write_file(fs::path(run_dir) / "metrics.json", text);
  std::cout << text;
  if (!a.dump_spectrum.empty()) dump_spectra(a.dump_spectrum, in, ps, cfg);
  log_info("best epoch " + std::to_string(res.best_epoch) + ", artifacts in " + run_dir);
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, split = "test", out;
  std::vector<int> ks = {10, 20};
  bool rebuild_graphs = false;
};

int cmd_evaluate(const EvalArgs& a) {
  Checkpoint ck = load_checkpoint(a.checkpoint);
  const DataDir d = load_data_dir(a.data);
  if (ck.dims.users != d.ds.num_users() || ck.dims.items != d.ds.num_items() ||
      ck.dims.dim_visual != d.visual.dim || ck.dims.dim_text != d.text.dim)
    throw DataError("checkpoint was trained on a different dataset shape");
  const ItemGraphs graphs = graphs_for(d, ck.config, a.data, a.rebuild_graphs);
  const ModelInputs in = make_model_inputs(d.ds, d.visual, d.text, graphs);

  const MetricsReport rep = evaluate_split(in, ck.params, ck.config, d.ds, a.split, a.ks);
  const std::string text = rep.to_json();
  std::cout << text;
  if (!a.out.empty()) write_file(a.out, text);
  return 0;
}

struct InspectArgs {
  std::string checkpoint, data, out;
  bool rebuild_graphs = false;
};

int cmd_inspect(const InspectArgs& a) {
  Checkpoint ck = load_checkpoint(a.checkpoint);
  const DataDir d = load_data_dir(a.data);
  const ItemGraphs graphs = graphs_for(d, ck.config, a.data, a.rebuild_graphs);
  const ModelInputs in = make_model_inputs(d.ds, d.visual, d.text, graphs);

  const FinalEmbeddings emb = compute_final_embeddings(in, ck.params, ck.config);
  const UniformityStats stats = uniformity_stats(emb.fused_items);
  const std::string text = stats.to_json();
  std::cout << text;
  if (!a.out.empty()) write_file(a.out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spectrum-fusion multimodal recommender"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string log_level = "info";
  int threads = 0;
  uint64_t seed = 42;
  app.add_option("--log-level", log_level, "debug|info|warn|error")
      ->check(CLI::IsMember({"debug", "info", "warn", "error"}));
  app.add_option("--threads", threads, "worker threads (0 = library default)");
  CLI::Option* seed_opt = app.add_option("--seed", seed, "random seed");

  PrepareArgs pa;
  CLI::App* prepare = app.add_subcommand("prepare", "index, filter, and split raw inputs");
  prepare->add_option("--interactions", pa.interactions, "interactions CSV/TSV")
      ->required();
  prepare->add_option("--visual", pa.visual, "visual feature matrix")->required();
  prepare->add_option("--text", pa.text, "text feature matrix")->required();
  prepare->add_option("--out", pa.out, "output dataset directory")->required();
  prepare->add_option("--k-core", pa.k_core, "minimum user/item degree");
  prepare->add_option("--user-col", pa.user_col, "user id column name");
  prepare->add_option("--item-col", pa.item_col, "item id column name");
  prepare->add_flag("--global-split", pa.global_split,
                    "split the pooled event list instead of per user");

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "fit the model on a prepared dataset");
  train->add_option("--data", ta.data, "prepared dataset directory")->required();
  train->add_option("--config", ta.config, "key = value config file")->required();
  train->add_option("--out", ta.out, "run directory (default runs/<time>-seed<S>)");
  train->add_flag("--rebuild-graphs", ta.rebuild_graphs, "ignore the graph cache");
  train->add_flag("--dry-run", ta.dry_run, "validate config and graphs, then stop");
  train->add_option("--dump-spectrum", ta.dump_spectrum,
                    "write per-modality magnitude spectra CSVs to this directory");

  EvalArgs ea;
  CLI::App* evaluate = app.add_subcommand("evaluate", "rank and score a checkpoint");
  evaluate->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required();
  evaluate->add_option("--data", ea.data, "prepared dataset directory")->required();
  evaluate->add_option("--split", ea.split, "val|test");
  evaluate->add_option("--k", ea.ks, "ranking cutoffs, e.g. 10,20")->delimiter(',');
  evaluate->add_option("--out", ea.out, "metrics JSON path");
  evaluate->add_flag("--rebuild-graphs", ea.rebuild_graphs, "ignore the graph cache");

  InspectArgs ia;
  CLI::App* inspect =
      app.add_subcommand("inspect", "fused-embedding spread diagnostics");
  inspect->add_option("--checkpoint", ia.checkpoint, "checkpoint file")->required();
  inspect->add_option("--data", ia.data, "prepared dataset directory")->required();
  inspect->add_option("--out", ia.out, "diagnostics JSON path");
  inspect->add_flag("--rebuild-graphs", ia.rebuild_graphs, "ignore the graph cache");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (log_level == "debug") set_log_level(LogLevel::Debug);
  else if (log_level == "warn") set_log_level(LogLevel::Warn);
  else if (log_level == "error") set_log_level(LogLevel::Error);
  else set_log_level(LogLevel::Info);
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  try {
    if (prepare->parsed()) return cmd_prepare(pa, seed);
    if (train->parsed()) return cmd_train(ta, seed_opt->count() > 0, seed);
    if (evaluate->parsed()) return cmd_evaluate(ea);
    return cmd_inspect(ia);
  } catch (const NumericError& e) {
    log_error(e.what());
    return 3;
  } catch (const std::exception& e) {  // config, data, shape: input problems
    log_error(e.what());
    return 2;
  }
}
