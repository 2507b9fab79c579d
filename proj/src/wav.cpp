#include "toat/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "toat/errors.hpp"

namespace toat {

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ofstream& f, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  f.write(reinterpret_cast<const char*>(b), 2);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

void write_wav_pcm16(const std::string& path, const Waveform& wave) {
  if (wave.sample_rate <= 0) throw InputError("write_wav: sample rate must be positive");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("write_wav: cannot open '" + path + "'");
  const std::uint32_t n = static_cast<std::uint32_t>(wave.samples.size());
  const std::uint32_t data_bytes = n * 2;
  f.write("RIFF", 4);
  put_u32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(f, 16);
  put_u16(f, 1);  // PCM
  put_u16(f, 1);  // mono
  put_u32(f, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(f, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put_u16(f, 2);
  put_u16(f, 16);
  f.write("data", 4);
  put_u32(f, data_bytes);
  for (double s : wave.samples) {
    double clamped = s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s);
    auto q = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
    put_u16(f, static_cast<std::uint16_t>(q));
  }
  if (!f) throw InputError("write_wav: write failed for '" + path + "'");
}

Waveform read_wav_pcm16(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("read_wav: cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw InputError("read_wav: '" + path + "' is not a RIFF/WAVE file");
  }
  // walk chunks; accept only PCM16 mono
  std::size_t pos = 12;
  int sample_rate = 0;
  std::size_t data_off = 0, data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t sz = get_u32(bytes.data() + pos + 4);
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
      if (pos + 8 + 16 > bytes.size()) throw InputError("read_wav: truncated fmt chunk in '" + path + "'");
      const unsigned char* fmt = bytes.data() + pos + 8;
      if (get_u16(fmt) != 1 || get_u16(fmt + 2) != 1 || get_u16(fmt + 14) != 16) {
        throw InputError("read_wav: '" + path + "' must be 16-bit PCM mono");
      }
      sample_rate = static_cast<int>(get_u32(fmt + 4));
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = sz;
    }
    pos += 8 + sz + (sz % 2);
  }
  if (sample_rate == 0 || data_off == 0) throw InputError("read_wav: missing fmt/data chunk in '" + path + "'");
  if (data_off + data_len > bytes.size()) throw InputError("read_wav: truncated data chunk in '" + path + "'");
  Waveform wave;
  wave.sample_rate = sample_rate;
  wave.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < wave.samples.size(); ++i) {
    const auto q = static_cast<std::int16_t>(get_u16(bytes.data() + data_off + 2 * i));
    wave.samples[i] = static_cast<double>(q) / 32768.0;
  }
  return wave;
}

}  // namespace toat
