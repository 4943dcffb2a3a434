#include "smore/features.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "smore/error.hpp"

namespace smore {

namespace {

constexpr char kMagic[8] = {'M', 'M', 'F', 'E', 'A', 'T', '0', '1'};

uint32_t read_u32_le(std::istream& in, const std::string& what) {
  uint8_t b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw DataError("feature file truncated reading " + what);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void write_u32_le(std::ostream& out, uint32_t v) {
  const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                        static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

struct RawRows {
  std::size_t dim = 0;
  std::vector<float> data;                // count x dim
  std::vector<std::string> ids;           // empty => pre-aligned
  std::size_t count() const { return dim == 0 ? 0 : data.size() / dim; }
};

std::vector<std::string> read_id_sidecar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<std::string> ids;
  if (!in) return ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

RawRows load_binary(std::ifstream& in, const std::string& path) {
  in.seekg(0);
  char magic[8];
  in.read(magic, 8);
  const uint32_t rows = read_u32_le(in, "row count");
  const uint32_t cols = read_u32_le(in, "column count");
  uint8_t dtype = 0;
  if (!in.read(reinterpret_cast<char*>(&dtype), 1))
    throw DataError("feature file truncated reading dtype: " + path);
  if (dtype != 0)
    throw DataError("unsupported feature dtype code " + std::to_string(dtype) +
                    " in " + path + " (only 0 = float32)");
  if (cols == 0) throw DataError("feature file has zero columns: " + path);

  RawRows raw;
  raw.dim = cols;
  raw.data.resize(static_cast<std::size_t>(rows) * cols);
  // Payload is little-endian float32; decode byte-wise for host independence.
  std::vector<uint8_t> buf(raw.data.size() * 4);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw DataError("feature file payload truncated: " + path);
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    const uint32_t bits = static_cast<uint32_t>(buf[4 * i]) |
                          static_cast<uint32_t>(buf[4 * i + 1]) << 8 |
                          static_cast<uint32_t>(buf[4 * i + 2]) << 16 |
                          static_cast<uint32_t>(buf[4 * i + 3]) << 24;
    std::memcpy(&raw.data[i], &bits, 4);
  }

  raw.ids = read_id_sidecar(path + ".ids");
  if (!raw.ids.empty() && raw.ids.size() != rows)
    throw DataError("sidecar " + path + ".ids has " + std::to_string(raw.ids.size()) +
                    " ids for " + std::to_string(rows) + " feature rows");
  return raw;
}

RawRows load_text(std::ifstream& in, const std::string& path) {
  in.seekg(0);
  RawRows raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    for (char& c : line)
      if (c == ',' || c == '\t') c = ' ';
    std::istringstream ss(line);
    std::string id;
    ss >> id;
    std::vector<float> vals;
    double x;
    while (ss >> x) vals.push_back(static_cast<float>(x));
    if (!ss.eof())
      throw DataError("feature file " + path + " line " + std::to_string(line_no) +
                      ": non-numeric value");
    if (vals.empty())
      throw DataError("feature file " + path + " line " + std::to_string(line_no) +
                      ": no feature values");
    if (raw.dim == 0) raw.dim = vals.size();
    if (vals.size() != raw.dim)
      throw DataError("feature file " + path + " line " + std::to_string(line_no) +
                      ": expected " + std::to_string(raw.dim) + " values, got " +
                      std::to_string(vals.size()));
    raw.ids.push_back(id);
    raw.data.insert(raw.data.end(), vals.begin(), vals.end());
  }
  if (raw.count() == 0) throw DataError("no feature rows in " + path);
  return raw;
}

}  // namespace

FeatureMatrix load_features(const std::string& path, char modality,
                            const Dataset& ds) {
  if (modality != 'v' && modality != 't')
    throw ConfigError(std::string("unknown modality tag '") + modality + "'");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file: " + path);

  char head[8] = {};
  in.read(head, 8);
  const bool binary = in.gcount() == 8 && std::memcmp(head, kMagic, 8) == 0;
  in.clear();
  RawRows raw = binary ? load_binary(in, path) : load_text(in, path);

  const std::size_t n = ds.num_items();
  FeatureMatrix fm;
  fm.modality = modality;
  fm.rows = n;
  fm.dim = raw.dim;
  fm.data.resize(n * raw.dim);

  std::vector<char> filled(n, 0);
  if (raw.ids.empty()) {
    // Pre-aligned binary matrix: row r is dataset item r.
    if (raw.count() != n)
      throw DataError("feature file " + path + " has " + std::to_string(raw.count()) +
                      " rows for " + std::to_string(n) +
                      " items and no id sidecar to align them");
    fm.data = std::move(raw.data);
    std::fill(filled.begin(), filled.end(), 1);
  } else {
    std::size_t dropped = 0;
    for (std::size_t r = 0; r < raw.ids.size(); ++r) {
      const auto it = ds.item_index.find(raw.ids[r]);
      if (it == ds.item_index.end()) {
        ++dropped;  // feature row for an item filtered out of the dataset
        continue;
      }
      const uint32_t idx = it->second;
      if (filled[idx])
        throw DataError("duplicate feature row for item " + raw.ids[r] + " in " + path);
      filled[idx] = 1;
      std::memcpy(fm.data.data() + static_cast<std::size_t>(idx) * fm.dim,
                  raw.data.data() + r * fm.dim, fm.dim * sizeof(float));
    }
    if (dropped > 0)
      log_debug("features " + path + ": dropped " + std::to_string(dropped) +
                " rows for items outside the dataset");
  }

  for (std::size_t i = 0; i < n; ++i)
    if (!filled[i])
      throw DataError("item " + ds.item_ids[i] + " has no feature row in " + path);

  for (std::size_t i = 0; i < n; ++i) {
    const float* r = fm.row(i);
    for (std::size_t c = 0; c < fm.dim; ++c)
      if (!std::isfinite(r[c]))
        throw DataError("non-finite feature value for item " + ds.item_ids[i] +
                        " in " + path);
  }
  return fm;
}

void save_features_binary(const std::string& path, const FeatureMatrix& fm,
                          const std::vector<std::string>* ids) {
  if (ids && ids->size() != fm.rows)
    throw ShapeError("feature id list does not match row count");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write feature file: " + path);
  out.write(kMagic, 8);
  write_u32_le(out, static_cast<uint32_t>(fm.rows));
  write_u32_le(out, static_cast<uint32_t>(fm.dim));
  const uint8_t dtype = 0;
  out.write(reinterpret_cast<const char*>(&dtype), 1);
  std::vector<uint8_t> buf(fm.data.size() * 4);
  for (std::size_t i = 0; i < fm.data.size(); ++i) {
    uint32_t bits;
    std::memcpy(&bits, &fm.data[i], 4);
    buf[4 * i] = static_cast<uint8_t>(bits);
    buf[4 * i + 1] = static_cast<uint8_t>(bits >> 8);
    buf[4 * i + 2] = static_cast<uint8_t>(bits >> 16);
    buf[4 * i + 3] = static_cast<uint8_t>(bits >> 24);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("failed writing feature file: " + path);
  if (ids) {
    std::ofstream sid(path + ".ids", std::ios::binary | std::ios::trunc);
    if (!sid) throw DataError("cannot write id sidecar: " + path + ".ids");
    for (const auto& id : *ids) sid << id << '\n';
  }
}

}  // namespace smore
