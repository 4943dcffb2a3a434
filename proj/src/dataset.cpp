#include "smore/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "smore/error.hpp"
#include "smore/io_container.hpp"
#include "smore/rng.hpp"

namespace smore {

namespace {

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

uint64_t fnv1a(uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t hash_pairs(uint64_t h, const std::vector<UserItem>& pairs) {
  for (const auto& [u, i] : pairs) {
    uint32_t le[2] = {u, i};
    h = fnv1a(h, le, sizeof le);
  }
  return h;
}

std::vector<int64_t> pairs_to_i64(const std::vector<UserItem>& pairs) {
  std::vector<int64_t> out;
  out.reserve(pairs.size() * 2);
  for (const auto& [u, i] : pairs) {
    out.push_back(u);
    out.push_back(i);
  }
  return out;
}

std::vector<UserItem> pairs_from_i64(const io::Entry& e, std::size_t users,
                                     std::size_t items) {
  const auto flat = e.as_i64();
  std::vector<UserItem> out(flat.size() / 2);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const int64_t u = flat[2 * k], i = flat[2 * k + 1];
    if (u < 0 || i < 0 || static_cast<std::size_t>(u) >= users ||
        static_cast<std::size_t>(i) >= items)
      throw DataError("dataset file: split entry out of range");
    out[k] = {static_cast<uint32_t>(u), static_cast<uint32_t>(i)};
  }
  return out;
}

std::vector<uint8_t> join_ids(const std::vector<std::string>& ids) {
  std::vector<uint8_t> out;
  for (const auto& id : ids) {
    out.insert(out.end(), id.begin(), id.end());
    out.push_back('\n');
  }
  return out;
}

std::vector<std::string> split_ids(const io::Entry& e) {
  std::vector<std::string> out;
  std::string cur;
  for (uint8_t b : e.bytes) {
    if (b == '\n') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(b));
    }
  }
  if (!cur.empty()) throw DataError("dataset file: unterminated id list");
  return out;
}

}  // namespace

RawInteractions load_interactions(const std::string& path,
                                  const InteractionColumns& cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open interactions file: " + path);

  std::string line;
  std::size_t line_no = 0;
  // First non-empty line decides the delimiter and whether a header exists.
  char delim = '\t';
  std::size_t user_col = 0, item_col = 1;
  bool saw_first = false;
  RawInteractions raw;
  std::unordered_set<std::string> seen;

  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;

    if (!saw_first) {
      saw_first = true;
      delim = line.find('\t') != std::string::npos ? '\t' : ',';
      const auto fields = split_fields(line, delim);
      const auto find = [&](const std::string& name) {
        for (std::size_t c = 0; c < fields.size(); ++c)
          if (fields[c] == name) return static_cast<long>(c);
        return -1L;
      };
      const long uc = find(cols.user), ic = find(cols.item);
      // Non-default column names assert that a named header exists.
      const bool custom = cols.user != InteractionColumns{}.user ||
                          cols.item != InteractionColumns{}.item;
      if (uc >= 0 || ic >= 0 || custom) {  // header row
        if (uc < 0)
          throw DataError("interactions header missing column '" + cols.user +
                          "' in " + path);
        if (ic < 0)
          throw DataError("interactions header missing column '" + cols.item +
                          "' in " + path);
        user_col = static_cast<std::size_t>(uc);
        item_col = static_cast<std::size_t>(ic);
        continue;  // header consumed
      }
      // Headerless: fall through and parse this line positionally.
    }

    const auto fields = split_fields(line, delim);
    const std::size_t need = std::max(user_col, item_col) + 1;
    if (fields.size() < need)
      throw DataError("malformed interactions row at line " +
                      std::to_string(line_no) + ": expected at least " +
                      std::to_string(need) + " columns, got " +
                      std::to_string(fields.size()));
    const std::string& u = fields[user_col];
    const std::string& i = fields[item_col];
    if (u.empty() || i.empty())
      throw DataError("malformed interactions row at line " +
                      std::to_string(line_no) + ": empty user or item id");
    std::string key = u;
    key.push_back('\x1f');
    key += i;
    if (seen.insert(std::move(key)).second) raw.events.emplace_back(u, i);
  }

  if (raw.events.empty())
    throw DataError("no interactions found in " + path);
  return raw;
}

RawInteractions kcore_filter(const RawInteractions& raw, int k) {
  if (k < 1) throw ConfigError("k-core filtering requires k >= 1");
  RawInteractions cur = raw;
  for (;;) {
    std::unordered_map<std::string, int> udeg, ideg;
    for (const auto& [u, i] : cur.events) {
      ++udeg[u];
      ++ideg[i];
    }
    RawInteractions next;
    next.events.reserve(cur.events.size());
    for (const auto& ev : cur.events)
      if (udeg[ev.first] >= k && ideg[ev.second] >= k)
        next.events.push_back(ev);
    if (next.events.size() == cur.events.size()) break;
    cur = std::move(next);
  }
  if (cur.events.empty())
    throw DataError("k-core filter with k=" + std::to_string(k) +
                    " removed every interaction; use a smaller k");
  return cur;
}

uint64_t Dataset::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& id : user_ids) h = fnv1a(fnv1a(h, id.data(), id.size()), "\n", 1);
  for (const auto& id : item_ids) h = fnv1a(fnv1a(h, id.data(), id.size()), "\n", 1);
  h = hash_pairs(h, train);
  h = hash_pairs(h, val);
  h = hash_pairs(h, test);
  return h;
}

void Dataset::rebuild_derived() {
  const std::size_t m = num_users(), n = num_items();
  std::vector<std::tuple<uint32_t, uint32_t, double>> trip;
  trip.reserve(train.size());
  for (const auto& [u, i] : train) trip.emplace_back(u, i, 1.0);
  train_csr = SparseMatrix::from_triplets(m, n, std::move(trip));

  user_train_items.assign(m, {});
  item_train_degree.assign(n, 0);
  for (std::size_t u = 0; u < m; ++u) {
    for (std::size_t p = train_csr.indptr[u]; p < train_csr.indptr[u + 1]; ++p) {
      const uint32_t i = train_csr.indices[p];
      user_train_items[u].push_back(i);
      ++item_train_degree[i];
    }
  }
  for (std::size_t u = 0; u < m; ++u)
    if (user_train_items[u].empty())
      throw DataError("user " + user_ids[u] + " has no training interactions");
}

Dataset split(const RawInteractions& raw, const SplitRatios& ratios,
              uint64_t seed, bool global_split) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1, got " + std::to_string(sum));
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0)
    throw ConfigError("split ratios must be nonnegative");
  if (raw.events.empty()) throw DataError("cannot split empty interactions");

  Dataset ds;
  {
    std::vector<std::string> us, is;
    for (const auto& [u, i] : raw.events) {
      us.push_back(u);
      is.push_back(i);
    }
    std::sort(us.begin(), us.end());
    us.erase(std::unique(us.begin(), us.end()), us.end());
    std::sort(is.begin(), is.end());
    is.erase(std::unique(is.begin(), is.end()), is.end());
    ds.user_ids = std::move(us);
    ds.item_ids = std::move(is);
  }
  for (uint32_t u = 0; u < ds.user_ids.size(); ++u) ds.user_index[ds.user_ids[u]] = u;
  for (uint32_t i = 0; i < ds.item_ids.size(); ++i) ds.item_index[ds.item_ids[i]] = i;

  // Canonical event order: by (user, item) index, independent of file order.
  std::vector<UserItem> events;
  events.reserve(raw.events.size());
  for (const auto& [u, i] : raw.events)
    events.emplace_back(ds.user_index.at(u), ds.item_index.at(i));
  std::sort(events.begin(), events.end());

  const Rng master(seed);
  const auto boundaries = [&](std::size_t n) {
    auto c1 = std::llround(ratios.train * static_cast<double>(n));
    auto c2 = std::llround((ratios.train + ratios.val) * static_cast<double>(n));
    const auto ln = static_cast<long long>(n);
    c1 = std::clamp(c1, 1LL, ln);  // every slice keeps at least one train event
    c2 = std::clamp(c2, c1, ln);
    return std::pair<std::size_t, std::size_t>(c1, c2);
  };
  const auto shuffle = [](std::vector<UserItem>& v, Rng r) {
    for (std::size_t a = v.size(); a > 1; --a)
      std::swap(v[a - 1], v[r.uniform_index(a)]);
  };

  if (global_split) {
    shuffle(events, master.fork(0));
    const auto [c1, c2] = boundaries(events.size());
    ds.train.assign(events.begin(), events.begin() + c1);
    ds.val.assign(events.begin() + c1, events.begin() + c2);
    ds.test.assign(events.begin() + c2, events.end());
    // Repair evaluability: a user may land entirely in the holdouts.
    std::vector<char> has_train(ds.user_ids.size(), 0);
    for (const auto& [u, i] : ds.train) has_train[u] = 1;
    const auto reclaim = [&](std::vector<UserItem>& from) {
      for (std::size_t k = 0; k < from.size();) {
        if (!has_train[from[k].first]) {
          has_train[from[k].first] = 1;
          ds.train.push_back(from[k]);
          from.erase(from.begin() + static_cast<long>(k));
        } else {
          ++k;
        }
      }
    };
    reclaim(ds.val);
    reclaim(ds.test);
  } else {
    std::vector<std::vector<UserItem>> per_user(ds.user_ids.size());
    for (const auto& ev : events) per_user[ev.first].push_back(ev);
    for (uint32_t u = 0; u < per_user.size(); ++u) {
      auto& ev = per_user[u];
      if (ev.size() < 3) {  // too small to hold anything out
        ds.train.insert(ds.train.end(), ev.begin(), ev.end());
        continue;
      }
      shuffle(ev, master.fork(u));
      const auto [c1, c2] = boundaries(ev.size());
      ds.train.insert(ds.train.end(), ev.begin(), ev.begin() + c1);
      ds.val.insert(ds.val.end(), ev.begin() + c1, ev.begin() + c2);
      ds.test.insert(ds.test.end(), ev.begin() + c2, ev.end());
    }
  }

  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.val.begin(), ds.val.end());
  std::sort(ds.test.begin(), ds.test.end());
  ds.rebuild_derived();
  return ds;
}

void Dataset::save(const std::string& path) const {
  io::Container c;
  const auto ub = join_ids(user_ids), ib = join_ids(item_ids);
  c.put_u8("user_ids", {ub.size()}, ub);
  c.put_u8("item_ids", {ib.size()}, ib);
  c.put_i64("split_train", {train.size(), 2}, pairs_to_i64(train));
  c.put_i64("split_val", {val.size(), 2}, pairs_to_i64(val));
  c.put_i64("split_test", {test.size(), 2}, pairs_to_i64(test));
  c.save(path);
}

Dataset Dataset::load(const std::string& path) {
  const io::Container c = io::Container::load(path);
  Dataset ds;
  ds.user_ids = split_ids(c.get("user_ids"));
  ds.item_ids = split_ids(c.get("item_ids"));
  if (ds.user_ids.empty() || ds.item_ids.empty())
    throw DataError("dataset file has no users or no items: " + path);
  for (uint32_t u = 0; u < ds.user_ids.size(); ++u) ds.user_index[ds.user_ids[u]] = u;
  for (uint32_t i = 0; i < ds.item_ids.size(); ++i) ds.item_index[ds.item_ids[i]] = i;
  ds.train = pairs_from_i64(c.get("split_train"), ds.num_users(), ds.num_items());
  ds.val = pairs_from_i64(c.get("split_val"), ds.num_users(), ds.num_items());
  ds.test = pairs_from_i64(c.get("split_test"), ds.num_users(), ds.num_items());
  ds.rebuild_derived();
  return ds;
}

}  // namespace smore
