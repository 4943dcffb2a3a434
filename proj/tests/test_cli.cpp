#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "smore/features.hpp"
#include "support/synthetic.hpp"

using namespace smore;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

struct CmdResult {
  int code = -1;
  std::string out;  // stdout + stderr interleaved
};

CmdResult run(const std::string& cmd) {
  FILE* p = ::popen((cmd + " 2>&1").c_str(), "r");
  REQUIRE(p != nullptr);
  CmdResult r;
  char buf[4096];
  std::size_t n;
  while ((n = ::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

// Parses the last JSON document in the combined output. Pretty-printed
// documents span lines, so take everything from the last line that opens an
// object; stderr log lines are unbuffered and land earlier in the stream.
json last_json(const std::string& out) {
  std::size_t start = std::string::npos;
  std::size_t pos = 0;
  while (pos < out.size()) {
    const std::size_t eol = out.find('\n', pos);
    if (out[pos] == '{') start = pos;
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  REQUIRE(start != std::string::npos);
  return json::parse(out.substr(start));
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("smore_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// Writes raw interaction + feature files the way an upstream pipeline would:
// CSV with a header, binary matrices with id sidecars in shuffled row order.
void write_inputs(const TempDir& tmp, const testsupport::Synthetic& syn) {
  std::ofstream inter(tmp.file("interactions.csv"), std::ios::binary);
  inter << "user_id,item_id\n";
  for (const auto& [u, i] : syn.raw.events) inter << u << "," << i << "\n";
  inter.close();

  const auto write_side = [&](const FeatureMatrix& fm, const std::string& name) {
    // Reverse row order; the sidecar keeps rows attributable.
    FeatureMatrix shuffled = fm;
    std::vector<std::string> ids(fm.rows);
    for (std::size_t r = 0; r < fm.rows; ++r) {
      const std::size_t src = fm.rows - 1 - r;
      ids[r] = syn.ds.item_ids[src];
      std::copy(fm.data.begin() + src * fm.dim, fm.data.begin() + (src + 1) * fm.dim,
                shuffled.data.begin() + r * fm.dim);
    }
    save_features_binary(tmp.file(name), shuffled, &ids);
  };
  write_side(syn.visual, "visual.bin");
  write_side(syn.text, "text.bin");
}

const std::string kTrainConfig =
    "embedding_dim = 16\n"
    "gcn_layers = 2\n"
    "knn_k_visual = 5\n"
    "knn_k_text = 5\n"
    "contrastive_weight = 0.05\n"
    "reg_weight = 1e-4\n"
    "temperature = 0.2\n"
    "learning_rate = 0.01\n"
    "batch_size = 64\n"
    "max_epochs = 5\n"
    "patience = 10\n"
    "seed = 3\n";

std::string bin() { return SMORE_BIN; }

// One prepared dataset directory shared by the read-only test cases.
struct Prepared {
  TempDir tmp;
  std::string data;
  Prepared() {
    const auto syn = testsupport::make_planted_block(1);
    write_inputs(tmp, syn);
    data = tmp.file("data");
    const CmdResult r = run(bin() + " prepare --interactions " +
                            tmp.file("interactions.csv") + " --visual " +
                            tmp.file("visual.bin") + " --text " + tmp.file("text.bin") +
                            " --k-core 1 --seed 11 --out " + data);
    REQUIRE(r.code == 0);
  }
};

Prepared& prepared() {
  static Prepared p;
  return p;
}

}  // namespace

TEST_CASE("prepare writes a complete, reproducible dataset directory") {
  const auto syn = testsupport::make_planted_block(1);
  TempDir tmp;
  write_inputs(tmp, syn);
  const std::string cmd = bin() + " prepare --interactions " +
                          tmp.file("interactions.csv") + " --visual " +
                          tmp.file("visual.bin") + " --text " + tmp.file("text.bin") +
                          " --k-core 1 --seed 11 --out " + tmp.file("data");
  const CmdResult r = run(cmd);
  CHECK(r.code == 0);
  for (const char* f : {"dataset.bin", "features_visual.bin", "features_text.bin",
                        "stats.json"})
    CHECK(fs::exists(tmp.path / "data" / f));

  const json stats = last_json(r.out);
  CHECK(stats["users"] == 20);
  CHECK(stats["items"] == 30);
  CHECK(stats["events"] == syn.raw.events.size());
  CHECK(stats["train"].get<int>() + stats["val"].get<int>() + stats["test"].get<int>() ==
        stats["events"].get<int>());

  // Byte-identical rerun into a second directory.
  const CmdResult r2 = run(bin() + " prepare --interactions " +
                           tmp.file("interactions.csv") + " --visual " +
                           tmp.file("visual.bin") + " --text " + tmp.file("text.bin") +
                           " --k-core 1 --seed 11 --out " + tmp.file("data2"));
  CHECK(r2.code == 0);
  for (const char* f : {"dataset.bin", "features_visual.bin", "features_text.bin",
                        "stats.json"})
    CHECK(read_bytes(tmp.path / "data" / f) == read_bytes(tmp.path / "data2" / f));

  // A different seed changes the split, and therefore the dataset hash.
  const CmdResult r3 = run(bin() + " prepare --interactions " +
                           tmp.file("interactions.csv") + " --visual " +
                           tmp.file("visual.bin") + " --text " + tmp.file("text.bin") +
                           " --k-core 1 --seed 12 --out " + tmp.file("data3"));
  CHECK(r3.code == 0);
  CHECK(last_json(r3.out)["dataset_hash"] != stats["dataset_hash"]);
}

TEST_CASE("prepare failures name the offending input and exit 2") {
  const auto syn = testsupport::make_planted_block(1);
  TempDir tmp;
  write_inputs(tmp, syn);
  const CmdResult missing = run(bin() + " prepare --interactions " +
                                tmp.file("interactions.csv") + " --visual " +
                                tmp.file("nope.bin") + " --text " + tmp.file("text.bin") +
                                " --k-core 1 --out " + tmp.file("d"));
  CHECK(missing.code == 2);
  CHECK(missing.out.find("visual") != std::string::npos);

  const CmdResult badcol = run(bin() + " prepare --interactions " +
                               tmp.file("interactions.csv") + " --visual " +
                               tmp.file("visual.bin") + " --text " + tmp.file("text.bin") +
                               " --user-col member --k-core 1 --out " + tmp.file("d2"));
  CHECK(badcol.code == 2);
  CHECK(badcol.out.find("member") != std::string::npos);

  const CmdResult badflag = run(bin() + " --log-level loud prepare");
  CHECK(badflag.code == 2);
}

TEST_CASE("train produces manifest, epoch log, checkpoint, and test metrics") {
  auto& p = prepared();
  TempDir tmp;
  std::ofstream(tmp.file("train.cfg"), std::ios::binary) << kTrainConfig;
  const std::string run_dir = tmp.file("run");
  const CmdResult r = run(bin() + " train --data " + p.data + " --config " +
                          tmp.file("train.cfg") + " --out " + run_dir);
  CHECK(r.code == 0);
  for (const char* f : {"manifest.json", "train_log.jsonl", "checkpoint.bin",
                        "metrics.json"})
    CHECK(fs::exists(fs::path(run_dir) / f));

  // Graph cache lands next to the dataset so later runs can reuse it.
  CHECK(fs::exists(fs::path(p.data) / "graphs_k5_k5.bin"));

  const json manifest = json::parse(read_bytes(fs::path(run_dir) / "manifest.json"));
  CHECK(manifest["command"] == "train");
  CHECK(manifest["seed"] == 3);
  CHECK(manifest["config"].get<std::string>().find("embedding_dim = 16") !=
        std::string::npos);
  CHECK(manifest["inputs"].contains("features_visual"));

  std::ifstream log(fs::path(run_dir) / "train_log.jsonl");
  std::string line;
  int epochs = 0;
  while (std::getline(log, line)) {
    const json e = json::parse(line);
    CHECK(e["epoch"] == ++epochs);
    CHECK(e.contains("loss"));
    CHECK(e.contains("val_recall20"));
  }
  CHECK(epochs == 5);

  const json metrics = json::parse(read_bytes(fs::path(run_dir) / "metrics.json"));
  CHECK(metrics["split"] == "test");
  CHECK(metrics["recall"].contains("10"));
  CHECK(metrics["recall"].contains("20"));
}

TEST_CASE("train reruns with one seed are byte-identical apart from timestamps") {
  auto& p = prepared();
  TempDir tmp;
  std::ofstream(tmp.file("train.cfg"), std::ios::binary) << kTrainConfig;
  const auto go = [&](const std::string& out) {
    return run(bin() + " train --data " + p.data + " --config " + tmp.file("train.cfg") +
               " --out " + tmp.file(out));
  };
  CHECK(go("r1").code == 0);
  CHECK(go("r2").code == 0);

  for (const char* f : {"checkpoint.bin", "metrics.json"})
    CHECK(read_bytes(tmp.path / "r1" / f) == read_bytes(tmp.path / "r2" / f));

  // Epoch logs agree on every field except wall-clock seconds.
  std::ifstream l1(tmp.path / "r1" / "train_log.jsonl");
  std::ifstream l2(tmp.path / "r2" / "train_log.jsonl");
  std::string a, b;
  int lines = 0;
  while (std::getline(l1, a) && std::getline(l2, b)) {
    json ja = json::parse(a), jb = json::parse(b);
    ja.erase("seconds");
    jb.erase("seconds");
    CHECK(ja == jb);
    ++lines;
  }
  CHECK(lines == 5);
  CHECK_FALSE(std::getline(l2, b));  // same length

  json m1 = json::parse(read_bytes(tmp.path / "r1" / "manifest.json"));
  json m2 = json::parse(read_bytes(tmp.path / "r2" / "manifest.json"));
  m1.erase("created_utc");
  m2.erase("created_utc");
  CHECK(m1 == m2);
}

TEST_CASE("train respects a seed override and records it") {
  auto& p = prepared();
  TempDir tmp;
  std::ofstream(tmp.file("train.cfg"), std::ios::binary) << kTrainConfig;
  const CmdResult r = run(bin() + " --seed 99 train --data " + p.data + " --config " +
                          tmp.file("train.cfg") + " --out " + tmp.file("run"));
  CHECK(r.code == 0);
  const json manifest = json::parse(read_bytes(tmp.path / "run" / "manifest.json"));
  CHECK(manifest["seed"] == 99);
  CHECK(manifest["config"].get<std::string>().find("seed = 99") != std::string::npos);
}

TEST_CASE("dry runs validate everything but write no run directory") {
  auto& p = prepared();
  TempDir tmp;
  std::ofstream(tmp.file("train.cfg"), std::ios::binary) << kTrainConfig;
  const std::string run_dir = tmp.file("dry");
  const CmdResult r = run(bin() + " train --dry-run --data " + p.data + " --config " +
                          tmp.file("train.cfg") + " --out " + run_dir);
  CHECK(r.code == 0);
  CHECK_FALSE(fs::exists(run_dir));

  const CmdResult bad = run(bin() + " train --dry-run --data " + p.data + " --config " +
                            tmp.file("nonexistent.cfg") + " --out " + run_dir);
  CHECK(bad.code == 2);
}

TEST_CASE("unknown config keys fail fast with exit code 2") {
  auto& p = prepared();
  TempDir tmp;
  std::ofstream(tmp.file("bad.cfg"), std::ios::binary)
      << kTrainConfig << "frobnicate = 1\n";
  const CmdResult r = run(bin() + " train --data " + p.data + " --config " +
                          tmp.file("bad.cfg") + " --out " + tmp.file("run"));
  CHECK(r.code == 2);
  CHECK(r.out.find("frobnicate") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp.file("run")));
}

TEST_CASE("evaluate scores a saved checkpoint on either holdout split") {
  auto& p = prepared();
  TempDir tmp;
  std::ofstream(tmp.file("train.cfg"), std::ios::binary) << kTrainConfig;
  REQUIRE(run(bin() + " train --data " + p.data + " --config " + tmp.file("train.cfg") +
              " --out " + tmp.file("run"))
              .code == 0);
  const std::string ckpt = (tmp.path / "run" / "checkpoint.bin").string();

  const CmdResult test_run = run(bin() + " evaluate --checkpoint " + ckpt + " --data " +
                                 p.data + " --split test --k 5,10 --out " +
                                 tmp.file("m.json"));
  CHECK(test_run.code == 0);
  const json m = json::parse(read_bytes(tmp.file("m.json")));
  CHECK(m["split"] == "test");
  CHECK(m["ks"] == std::vector<int>({5, 10}));
  CHECK(m["recall"].contains("5"));
  CHECK(last_json(test_run.out) == m);

  // The train-time metrics.json equals an explicit evaluate at 10,20.
  const CmdResult again = run(bin() + " evaluate --checkpoint " + ckpt + " --data " +
                              p.data + " --split test --k 10,20");
  CHECK(last_json(again.out) ==
        json::parse(read_bytes(tmp.path / "run" / "metrics.json")));

  CHECK(run(bin() + " evaluate --checkpoint " + ckpt + " --data " + p.data +
            " --split val")
            .code == 0);
  const CmdResult bad = run(bin() + " evaluate --checkpoint " + ckpt + " --data " +
                            p.data + " --split train");
  CHECK(bad.code == 2);
}

TEST_CASE("inspect reports tighter fused clustering after training") {
  auto& p = prepared();
  TempDir tmp;
  std::ofstream(tmp.file("train.cfg"), std::ios::binary) << kTrainConfig;
  // An effectively untrained checkpoint: one epoch at a vanishing step size.
  std::ofstream(tmp.file("frozen.cfg"), std::ios::binary)
      << "embedding_dim = 16\ngcn_layers = 2\nknn_k_visual = 5\nknn_k_text = 5\n"
         "learning_rate = 1e-30\nbatch_size = 64\nmax_epochs = 1\npatience = 5\n"
         "seed = 3\n";
  REQUIRE(run(bin() + " train --data " + p.data + " --config " + tmp.file("train.cfg") +
              " --out " + tmp.file("trained"))
              .code == 0);
  REQUIRE(run(bin() + " train --data " + p.data + " --config " + tmp.file("frozen.cfg") +
              " --out " + tmp.file("untrained"))
              .code == 0);

  const auto stats = [&](const std::string& run_dir) {
    const CmdResult r =
        run(bin() + " inspect --checkpoint " + tmp.file(run_dir) + "/checkpoint.bin" +
            " --data " + p.data + " --out " + tmp.file(run_dir + ".json"));
    REQUIRE(r.code == 0);
    return json::parse(read_bytes(tmp.file(run_dir + ".json")));
  };
  const json trained = stats("trained");
  const json untrained = stats("untrained");
  CHECK(trained["rows_used"] == 30);
  CHECK(untrained["rows_used"] == 30);
  // Contrastive alignment pulls fused features into group clusters, away
  // from the near-random initial spread.
  CHECK(trained["mean_pairwise_cosine"].get<double>() !=
        untrained["mean_pairwise_cosine"].get<double>());
}

TEST_CASE("spectrum dumps contain one magnitude row per item") {
  auto& p = prepared();
  TempDir tmp;
  std::ofstream(tmp.file("train.cfg"), std::ios::binary) << kTrainConfig;
  const CmdResult r = run(bin() + " train --data " + p.data + " --config " +
                          tmp.file("train.cfg") + " --out " + tmp.file("run") +
                          " --dump-spectrum " + tmp.file("spectra"));
  CHECK(r.code == 0);
  for (const char* f :
       {"spectrum_visual.csv", "spectrum_text.csv", "spectrum_fused.csv"}) {
    const fs::path path = tmp.path / "spectra" / f;
    REQUIRE(fs::exists(path));
    std::ifstream in(path);
    std::string line;
    int rows = 0;
    int cols = -1;
    while (std::getline(in, line)) {
      ++rows;
      const int commas = static_cast<int>(std::count(line.begin(), line.end(), ','));
      if (cols < 0) cols = commas + 1;
      CHECK(commas + 1 == cols);
    }
    CHECK(rows == 30);
    CHECK(cols == 16 / 2 + 1);
  }
}

TEST_CASE("the graph cache is reused and can be bypassed") {
  auto& p = prepared();
  TempDir tmp;
  std::ofstream(tmp.file("train.cfg"), std::ios::binary) << kTrainConfig;
  const fs::path cache = fs::path(p.data) / "graphs_k5_k5.bin";
  REQUIRE(run(bin() + " train --dry-run --data " + p.data + " --config " +
              tmp.file("train.cfg"))
              .code == 0);
  REQUIRE(fs::exists(cache));
  const std::string before = read_bytes(cache);
  REQUIRE(run(bin() + " train --dry-run --rebuild-graphs --data " + p.data +
              " --config " + tmp.file("train.cfg"))
              .code == 0);
  CHECK(read_bytes(cache) == before);  // deterministic rebuild
}
