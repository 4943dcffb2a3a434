#include "smore/model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "smore/error.hpp"
#include "smore/io_container.hpp"

namespace smore {

namespace {

constexpr const char* kConfigKeys[] = {
    "embedding_dim", "gcn_layers", "knn_k_visual", "knn_k_text",
    "contrastive_weight", "reg_weight", "temperature", "learning_rate",
    "batch_size", "max_epochs", "patience", "seed", "attention",
    "cl_full_denominator", "disable_fusion", "freeze_filters"};

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

long long parse_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size())
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return x;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size())
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" +
                      v + "'");
  return x;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size())
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

// Shortest decimal form that parses back to the same double.
std::string fmt_double(double x) {
  char buf[40];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) return buf;
  }
  return buf;
}

}  // namespace

void ModelConfig::set_key(const std::string& key, const std::string& value) {
  if (key == "embedding_dim") {
    embedding_dim = static_cast<std::size_t>(parse_int(key, value));
  } else if (key == "gcn_layers") {
    gcn_layers = static_cast<int>(parse_int(key, value));
  } else if (key == "knn_k_visual") {
    knn_k_visual = static_cast<int>(parse_int(key, value));
  } else if (key == "knn_k_text") {
    knn_k_text = static_cast<int>(parse_int(key, value));
  } else if (key == "contrastive_weight") {
    contrastive_weight = parse_double(key, value);
  } else if (key == "reg_weight") {
    reg_weight = parse_double(key, value);
  } else if (key == "temperature") {
    temperature = parse_double(key, value);
  } else if (key == "learning_rate") {
    learning_rate = parse_double(key, value);
  } else if (key == "batch_size") {
    batch_size = static_cast<int>(parse_int(key, value));
  } else if (key == "max_epochs") {
    max_epochs = static_cast<int>(parse_int(key, value));
  } else if (key == "patience") {
    patience = static_cast<int>(parse_int(key, value));
  } else if (key == "seed") {
    seed = parse_u64(key, value);
  } else if (key == "attention") {
    if (value == "per_entity") attention = AttentionMode::PerEntity;
    else if (value == "global") attention = AttentionMode::Global;
    else
      throw ConfigError("config key 'attention': expected per_entity or global, got '" +
                        value + "'");
  } else if (key == "cl_full_denominator") {
    cl_full_denominator = parse_bool(key, value);
  } else if (key == "disable_fusion") {
    disable_fusion = parse_bool(key, value);
  } else if (key == "freeze_filters") {
    freeze_filters = parse_bool(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void ModelConfig::apply_env() {
  for (const char* key : kConfigKeys) {
    std::string env = "SMORE_";
    for (const char* c = key; *c; ++c)
      env.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(*c))));
    if (const char* v = std::getenv(env.c_str())) set_key(key, v);
  }
}

void ModelConfig::validate() const {
  if (embedding_dim < 2 || embedding_dim > 4096)
    throw ConfigError("embedding_dim must be in [2, 4096]");
  if (gcn_layers < 0 || gcn_layers > 8)
    throw ConfigError("gcn_layers must be in [0, 8]");
  if (knn_k_visual < 1 || knn_k_visual > 64)
    throw ConfigError("knn_k_visual must be in [1, 64]");
  if (knn_k_text < 1 || knn_k_text > 64)
    throw ConfigError("knn_k_text must be in [1, 64]");
  if (contrastive_weight < 0) throw ConfigError("contrastive_weight must be >= 0");
  if (reg_weight < 0) throw ConfigError("reg_weight must be >= 0");
  if (!(temperature > 0)) throw ConfigError("temperature must be > 0");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "embedding_dim = " << embedding_dim << '\n';
  out << "gcn_layers = " << gcn_layers << '\n';
  out << "knn_k_visual = " << knn_k_visual << '\n';
  out << "knn_k_text = " << knn_k_text << '\n';
  out << "contrastive_weight = " << fmt_double(contrastive_weight) << '\n';
  out << "reg_weight = " << fmt_double(reg_weight) << '\n';
  out << "temperature = " << fmt_double(temperature) << '\n';
  out << "learning_rate = " << fmt_double(learning_rate) << '\n';
  out << "batch_size = " << batch_size << '\n';
  out << "max_epochs = " << max_epochs << '\n';
  out << "patience = " << patience << '\n';
  out << "seed = " << seed << '\n';
  out << "attention = " << (attention == AttentionMode::PerEntity ? "per_entity" : "global")
      << '\n';
  out << "cl_full_denominator = " << (cl_full_denominator ? "true" : "false") << '\n';
  out << "disable_fusion = " << (disable_fusion ? "true" : "false") << '\n';
  out << "freeze_filters = " << (freeze_filters ? "true" : "false") << '\n';
  return out.str();
}

ModelConfig ModelConfig::from_text(const std::string& text, const std::string& origin) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + " line " + std::to_string(line_no) +
                        ": expected key = value");
    cfg.set_key(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

ModelConfig ModelConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str(), path);
}

void init_model_params(ParamStore& ps, const ModelConfig& cfg, const ModelDims& dims,
                       Rng& rng) {
  const std::size_t d = cfg.embedding_dim;
  const std::size_t bins = d / 2 + 1;
  if (dims.users == 0 || dims.items == 0)
    throw ConfigError("model needs at least one user and one item");
  if (dims.dim_visual == 0 || dims.dim_text == 0)
    throw ConfigError("model needs nonempty visual and text feature dimensions");

  const auto dense = [&](const std::string& name, Shape shape) {
    xavier_init(*ps.create(name, std::move(shape)), rng);
  };
  const auto bias = [&](const std::string& name) { ps.create(name, {d}); };
  const auto filter = [&](const std::string& name) {
    Parameter* p = ps.create(name, {bins}, /*complex=*/true);
    // Near-identity response so early training behaves like no filtering.
    for (std::size_t k = 0; k < bins; ++k) {
      p->value[2 * k] = 1.0 + rng.uniform(-0.02, 0.02);
      p->value[2 * k + 1] = rng.uniform(-0.02, 0.02);
    }
  };

  dense("embedding", {dims.users + dims.items, d});
  dense("proj_w_v", {d, dims.dim_visual});
  bias("proj_b_v");
  dense("proj_w_t", {d, dims.dim_text});
  bias("proj_b_t");
  filter("filter_v");
  filter("filter_t");
  filter("filter_fuse");
  for (const char* tag : {"v", "t", "f"}) {
    dense(std::string("gate_behave_w_") + tag, {d, d});
    bias(std::string("gate_behave_b_") + tag);
  }
  for (const char* tag : {"v", "t"}) {
    dense(std::string("attn_vec_") + tag, {d});
    dense(std::string("attn_w_") + tag, {d, d});
    bias(std::string("attn_b_") + tag);
  }
  for (const char* tag : {"v", "t", "f"}) {
    dense(std::string("gate_side_w_") + tag, {d, d});
    bias(std::string("gate_side_b_") + tag);
  }
}

ModelInputs make_model_inputs(const Dataset& ds, const FeatureMatrix& visual,
                              const FeatureMatrix& text, const ItemGraphs& graphs) {
  if (visual.rows != ds.num_items() || text.rows != ds.num_items())
    throw ShapeError("feature matrices are not aligned to the dataset items");
  ModelInputs in;
  in.visual = &visual;
  in.text = &text;
  in.g_visual = graphs.visual;
  in.g_text = graphs.text;
  in.g_fused = graphs.fused;
  in.g_visual_t = in.g_visual.transposed();
  in.g_text_t = in.g_text.transposed();
  in.g_fused_t = in.g_fused.transposed();
  const auto bip = build_bipartite(ds);
  in.ui = bip.user_item;
  in.iu = bip.item_user;
  in.users = ds.num_users();
  in.items = ds.num_items();
  return in;
}

ForwardIds model_forward(Tape& t, const ModelInputs& in, ParamStore& ps,
                         const ModelConfig& cfg) {
  const std::size_t m = in.users, n = in.items, d = cfg.embedding_dim;
  ForwardIds f;

  const Tape::Id e_id = t.param(ps.at("embedding"));
  std::vector<std::size_t> uidx(m), iidx(n);
  std::iota(uidx.begin(), uidx.end(), 0);
  std::iota(iidx.begin(), iidx.end(), m);
  const Tape::Id e_id_u = t.gather_rows(e_id, uidx);
  const Tape::Id e_id_i = t.gather_rows(e_id, iidx);

  const auto affine = [&](Tape::Id x, const std::string& w, const std::string& b) {
    return t.add_row_vec(t.matmul_nt(x, t.param(ps.at(w))), t.param(ps.at(b)));
  };

  // --- spectrum fusion over item content ------------------------------------
  const auto project = [&](const FeatureMatrix& fm, const char* w, const char* b) {
    const Tape::Id p = t.matmul_nt_f32(fm.data.data(), fm.rows, fm.dim,
                                       t.param(ps.at(w)));
    return t.add_row_vec(p, t.param(ps.at(b)));
  };
  const Tape::Id hv = project(*in.visual, "proj_w_v", "proj_b_v");
  const Tape::Id ht = project(*in.text, "proj_w_t", "proj_b_t");
  const Tape::Id sv = t.rfft(hv);
  const Tape::Id st = t.rfft(ht);
  f.spec_visual = sv;
  f.spec_text = st;

  const auto filter_leaf = [&](const char* name) {
    Parameter& p = ps.at(name);
    if (cfg.freeze_filters) {
      std::vector<double> ident(p.storage(), 0.0);
      for (std::size_t k = 0; k < p.numel(); ++k) ident[2 * k] = 1.0;
      return t.input(p.shape, std::move(ident), /*complex=*/true);
    }
    return t.param(p);
  };
  const Tape::Id hv_spec = t.irfft(t.cmul_rowvec(sv, filter_leaf("filter_v")), d);
  const Tape::Id ht_spec = t.irfft(t.cmul_rowvec(st, filter_leaf("filter_t")), d);

  // --- behavioral gating, one item-graph hop, user aggregation --------------
  const auto enrich = [&](Tape::Id h, const char* tag, const SparseMatrix& g,
                          const SparseMatrix& gt) {
    const Tape::Id gated =
        t.mul(e_id_i, t.sigmoid(affine(h, std::string("gate_behave_w_") + tag,
                                       std::string("gate_behave_b_") + tag)));
    const Tape::Id items = t.spmm(g, gt, gated);
    const Tape::Id users = t.spmm(in.ui, in.iu, items);
    return std::array<Tape::Id, 2>{users, items};
  };
  const auto hv_bar = enrich(hv_spec, "v", in.g_visual, in.g_visual_t);
  const auto ht_bar = enrich(ht_spec, "t", in.g_text, in.g_text_t);
  std::array<Tape::Id, 2> hf_bar;
  if (cfg.disable_fusion) {
    hf_bar = {t.input(Tensor::zeros({m, d})), t.input(Tensor::zeros({n, d}))};
  } else {
    const Tape::Id sf = t.cmul_rowvec(t.cmul(sv, st), filter_leaf("filter_fuse"));
    f.spec_fused = sf;
    const Tape::Id hf_spec = t.irfft(sf, d);
    hf_bar = enrich(hf_spec, "f", in.g_fused, in.g_fused_t);
  }
  f.fused_items = hf_bar[1];

  // --- behavioral view: L-layer propagation with mean readout ---------------
  std::vector<Tape::Id> layers_u = {e_id_u}, layers_i = {e_id_i};
  for (int l = 0; l < cfg.gcn_layers; ++l) {
    const Tape::Id nu = t.spmm(in.ui, in.iu, layers_i.back());
    const Tape::Id ni = t.spmm(in.iu, in.ui, layers_u.back());
    layers_u.push_back(nu);
    layers_i.push_back(ni);
  }
  const auto layer_mean = [&](const std::vector<Tape::Id>& v) {
    Tape::Id acc = v[0];
    for (std::size_t k = 1; k < v.size(); ++k) acc = t.add(acc, v[k]);
    return t.scale(acc, 1.0 / static_cast<double>(v.size()));
  };
  f.user_behav = layer_mean(layers_u);
  f.item_behav = layer_mean(layers_i);

  // --- modality-aware preference ---------------------------------------------
  const auto attn_score = [&](Tape::Id hf_block, const char* tag) {
    const Tape::Id z = t.tanh(affine(hf_block, std::string("attn_w_") + tag,
                                     std::string("attn_b_") + tag));
    return t.matvec(z, t.param(ps.at(std::string("attn_vec_") + tag)));
  };

  // Per-entity: each row softmaxes its own two modality scores. Global: one
  // softmax over entity-averaged scores, shared by every row.
  Tape::Id g_alpha = -1;
  if (cfg.attention == AttentionMode::Global) {
    const auto pooled = [&](const char* tag) {
      const Tape::Id su = t.sum_all(attn_score(hf_bar[0], tag));
      const Tape::Id si = t.sum_all(attn_score(hf_bar[1], tag));
      return t.scale(t.add(su, si), 1.0 / static_cast<double>(m + n));
    };
    g_alpha = t.softmax_rows(t.concat_cols({pooled("v"), pooled("t")}));
  }
  const auto weighted = [&](Tape::Id hf_block, Tape::Id hv_block, Tape::Id ht_block) {
    if (cfg.attention == AttentionMode::Global)
      return std::array<Tape::Id, 2>{
          t.mul_scalar_v(hv_block, t.select_col(g_alpha, 0)),
          t.mul_scalar_v(ht_block, t.select_col(g_alpha, 1))};
    const Tape::Id alpha =
        t.softmax_rows(t.concat_cols({attn_score(hf_block, "v"),
                                      attn_score(hf_block, "t")}));
    return std::array<Tape::Id, 2>{t.row_scale(hv_block, t.select_col(alpha, 0)),
                                   t.row_scale(ht_block, t.select_col(alpha, 1))};
  };

  const auto side_block = [&](Tape::Id ebar, Tape::Id hv_block, Tape::Id ht_block,
                              Tape::Id hf_block) {
    const auto w = weighted(hf_block, hv_block, ht_block);
    const auto gate = [&](const char* tag) {
      return t.sigmoid(affine(ebar, std::string("gate_side_w_") + tag,
                              std::string("gate_side_b_") + tag));
    };
    const Tape::Id uni =
        t.scale(t.add(t.mul(w[0], gate("v")), t.mul(w[1], gate("t"))), 0.5);
    return t.add(uni, t.mul(hf_block, gate("f")));
  };
  f.user_side = side_block(f.user_behav, hv_bar[0], ht_bar[0], hf_bar[0]);
  f.item_side = side_block(f.item_behav, hv_bar[1], ht_bar[1], hf_bar[1]);

  f.user_final = t.add(f.user_behav, f.user_side);
  f.item_final = t.add(f.item_behav, f.item_side);
  return f;
}

Tape::Id info_nce(Tape& t, Tape::Id behav, Tape::Id side,
                  const std::vector<std::size_t>& idx, double temperature,
                  bool full_denominator) {
  if (!(temperature > 0)) throw ConfigError("temperature must be > 0");
  if (idx.empty()) throw ShapeError("contrastive batch is empty");
  const Tape::Id eb = t.l2_normalize_rows(t.gather_rows(behav, idx));
  if (full_denominator) {
    const Tape::Id hs = t.l2_normalize_rows(side);
    const Tape::Id sim = t.scale(t.matmul_nt(eb, hs), 1.0 / temperature);
    return t.cross_entropy_rows(sim, idx);
  }
  const Tape::Id hs = t.l2_normalize_rows(t.gather_rows(side, idx));
  const Tape::Id sim = t.scale(t.matmul_nt(eb, hs), 1.0 / temperature);
  std::vector<std::size_t> diag(idx.size());
  std::iota(diag.begin(), diag.end(), 0);
  return t.cross_entropy_rows(sim, diag);
}

Tape::Id model_loss(Tape& t, const ModelInputs& in, const ForwardIds& f,
                    ParamStore& ps, const ModelConfig& cfg, const TripletBatch& batch,
                    LossValues* parts) {
  const std::size_t b = batch.users.size();
  if (b == 0 || batch.pos_items.size() != b || batch.neg_items.size() != b)
    throw ShapeError("triplet batch arrays must be nonempty and equally sized");

  const Tape::Id eu = t.gather_rows(f.user_final, batch.users);
  const Tape::Id ei = t.gather_rows(f.item_final, batch.pos_items);
  const Tape::Id ej = t.gather_rows(f.item_final, batch.neg_items);
  const Tape::Id margin = t.sub(t.row_dot(eu, ei), t.row_dot(eu, ej));
  const Tape::Id bpr = t.sum_all(t.softplus(t.scale(margin, -1.0)));

  const Tape::Id cl =
      t.add(info_nce(t, f.user_behav, f.user_side, batch.users, cfg.temperature,
                     cfg.cl_full_denominator),
            info_nce(t, f.item_behav, f.item_side, batch.pos_items, cfg.temperature,
                     cfg.cl_full_denominator));

  std::vector<std::size_t> rows;
  rows.reserve(3 * b);
  for (const auto u : batch.users) rows.push_back(u);
  for (const auto i : batch.pos_items) rows.push_back(in.users + i);
  for (const auto j : batch.neg_items) rows.push_back(in.users + j);
  const Tape::Id gathered = t.gather_rows(t.param(ps.at("embedding")), rows);
  const Tape::Id reg = t.sum_all(t.mul(gathered, gathered));

  const Tape::Id total = t.add(t.add(bpr, t.scale(cl, cfg.contrastive_weight)),
                               t.scale(reg, cfg.reg_weight));
  if (parts) {
    parts->bpr = t.scalar(bpr);
    parts->contrastive = t.scalar(cl);
    parts->reg = t.scalar(reg);
    parts->total = t.scalar(total);
  }
  return total;
}

FinalEmbeddings compute_final_embeddings(const ModelInputs& in, ParamStore& ps,
                                         const ModelConfig& cfg) {
  Tape t;
  const ForwardIds f = model_forward(t, in, ps, cfg);
  FinalEmbeddings out;
  out.users = Tensor({in.users, cfg.embedding_dim}, t.val(f.user_final));
  out.items = Tensor({in.items, cfg.embedding_dim}, t.val(f.item_final));
  out.fused_items = Tensor({in.items, cfg.embedding_dim}, t.val(f.fused_items));
  return out;
}

void save_checkpoint(const std::string& path, const ParamStore& ps,
                     const ModelConfig& cfg, const ModelDims& dims) {
  io::Container c;
  const std::string text = cfg.to_text();
  c.put_u8("config", {text.size()},
           std::vector<uint8_t>(text.begin(), text.end()));
  c.put_i64("meta", {4},
            {static_cast<int64_t>(dims.users), static_cast<int64_t>(dims.items),
             static_cast<int64_t>(dims.dim_visual),
             static_cast<int64_t>(dims.dim_text)});
  for (const auto& p : ps.all()) {
    if (p->complex)
      c.put_c128("param/" + p->name, p->shape, p->value);
    else
      c.put_f64("param/" + p->name, p->shape, p->value);
  }
  c.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  const io::Container c = io::Container::load(path);
  Checkpoint ck;
  const auto& cfg_entry = c.get("config");
  ck.config = ModelConfig::from_text(
      std::string(cfg_entry.bytes.begin(), cfg_entry.bytes.end()), path + " [config]");
  ck.config.validate();
  const auto meta = c.get("meta").as_i64();
  if (meta.size() != 4) throw DataError("checkpoint meta entry malformed: " + path);
  ck.dims = {static_cast<std::size_t>(meta[0]), static_cast<std::size_t>(meta[1]),
             static_cast<std::size_t>(meta[2]), static_cast<std::size_t>(meta[3])};

  Rng rng(0);  // shapes only; values are overwritten below
  init_model_params(ck.params, ck.config, ck.dims, rng);
  std::size_t entries = 0;
  for (const auto& p : ck.params.all()) {
    const auto& e = c.get("param/" + p->name);
    if (e.shape != p->shape)
      throw DataError("checkpoint parameter '" + p->name + "' has shape " +
                      shape_str(e.shape) + ", expected " + shape_str(p->shape));
    const auto vals = e.as_f64();
    if (vals.size() != p->value.size())
      throw DataError("checkpoint parameter '" + p->name + "' has wrong storage size");
    p->value = vals;
    ++entries;
  }
  if (entries + 2 != c.entries().size())
    throw DataError("checkpoint has unexpected extra entries: " + path);
  return ck;
}

}  // namespace smore
