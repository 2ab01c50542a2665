#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace madi {

struct Waveform {
  std::vector<double> samples;  // nominally in [-1, 1]
  int sample_rate = 16000;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  bool empty() const { return samples.empty(); }
};

namespace wav_detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace wav_detail

// PCM 16-bit mono writer.
inline void write_wav(const Waveform& w, const std::string& path) {
  using namespace wav_detail;
  std::string data;
  data.reserve(44 + w.samples.size() * 2);
  std::uint32_t nbytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  data += "RIFF";
  put_u32(data, 36 + nbytes);
  data += "WAVEfmt ";
  put_u32(data, 16);
  put_u16(data, 1);  // PCM
  put_u16(data, 1);  // mono
  put_u32(data, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(data, static_cast<std::uint32_t>(w.sample_rate * 2));
  put_u16(data, 2);
  put_u16(data, 16);
  data += "data";
  put_u32(data, nbytes);
  for (double s : w.samples) {
    long q = std::lround(std::clamp(s, -1.0, 1.0) * 32768.0);
    q = std::clamp(q, -32768L, 32767L);
    put_u16(data, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_wav: cannot open " + path);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
}

inline Waveform read_wav(const std::string& path) {
  using namespace wav_detail;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_wav: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 44 || std::memcmp(p, "RIFF", 4) != 0 ||
      std::memcmp(p + 8, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);
  std::size_t off = 12;
  int sample_rate = 0;
  std::uint16_t channels = 0, bits = 0;
  Waveform w;
  while (off + 8 <= bytes.size()) {
    std::uint32_t chunk_size = get_u32(p + off + 4);
    bool is_fmt = std::memcmp(p + off, "fmt ", 4) == 0;
    bool is_data = std::memcmp(p + off, "data", 4) == 0;
    std::size_t body = off + 8;
    if (is_fmt && body + 16 <= bytes.size()) {
      std::uint16_t fmt = get_u16(p + body);
      channels = get_u16(p + body + 2);
      sample_rate = static_cast<int>(get_u32(p + body + 4));
      bits = get_u16(p + body + 14);
      if (fmt != 1 || channels != 1 || bits != 16)
        throw std::runtime_error("read_wav: only PCM16 mono supported: " + path);
    } else if (is_data) {
      std::size_t n = std::min<std::size_t>(chunk_size, bytes.size() - body) / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto q = static_cast<std::int16_t>(get_u16(p + body + 2 * i));
        w.samples[i] = static_cast<double>(q) / 32768.0;
      }
    }
    off = body + chunk_size + (chunk_size & 1);
  }
  if (sample_rate == 0) throw std::runtime_error("read_wav: missing fmt chunk");
  w.sample_rate = sample_rate;
  return w;
}

}  // namespace madi
