#pragma once

// Versioned binary checkpoint: model hyperparameters, symbol table, and
// named parameter tensors. Doubles are stored raw, so save/load round-trips
// bit-exactly.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "madi/model.hpp"

namespace madi {

namespace ckpt_detail {

constexpr char kMagic[8] = {'M', 'A', 'D', 'I', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

inline void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
inline void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::istream& is) {
  auto n = read_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

}  // namespace ckpt_detail

inline void save_checkpoint(const AsrModel& model, const std::string& path) {
  using namespace ckpt_detail;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  std::uint32_t version = kVersion;
  os.write(reinterpret_cast<const char*>(&version), sizeof(version));

  const auto& cfg = model.config();
  write_u64(os, cfg.layers);
  write_u64(os, cfg.width);
  write_u64(os, cfg.heads);
  write_u64(os, cfg.feat_dim);
  write_u64(os, cfg.subsampling);
  write_u64(os, cfg.ff_hidden);

  const auto& symbols = model.symbols();
  write_u64(os, symbols.characters.size());
  for (const auto& c : symbols.characters) write_string(os, c);
  write_u64(os, static_cast<std::uint64_t>(
                    static_cast<std::int64_t>(symbols.separator_id)));

  const auto& entries = model.params().entries();
  write_u64(os, entries.size());
  for (const auto& [name, t] : entries) {
    write_string(os, name);
    write_u64(os, t.shape().size());
    for (std::size_t d : t.shape()) write_u64(os, d);
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

inline AsrModel load_checkpoint(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  std::uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported version");

  EncoderConfig cfg;
  cfg.layers = read_u64(is);
  cfg.width = read_u64(is);
  cfg.heads = read_u64(is);
  cfg.feat_dim = read_u64(is);
  cfg.subsampling = read_u64(is);
  cfg.ff_hidden = read_u64(is);

  SymbolTable symbols;
  auto nchars = read_u64(is);
  for (std::uint64_t i = 0; i < nchars; ++i)
    symbols.characters.push_back(read_string(is));
  symbols.separator_id =
      static_cast<int>(static_cast<std::int64_t>(read_u64(is)));

  AsrModel model(symbols, cfg, 0);
  auto nparams = read_u64(is);
  if (nparams != model.params().entries().size())
    throw std::runtime_error("load_checkpoint: parameter count mismatch");
  for (std::uint64_t i = 0; i < nparams; ++i) {
    std::string name = read_string(is);
    Tensor t = model.params().find(name);
    auto ndim = read_u64(is);
    Shape shape;
    for (std::uint64_t d = 0; d < ndim; ++d) shape.push_back(read_u64(is));
    if (shape != t.shape())
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(t.values().data()),
            static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  }
  if (!is) throw std::runtime_error("load_checkpoint: truncated file: " + path);
  return model;
}

}  // namespace madi
