#pragma once

#include <string>
#include <vector>

namespace toat {

struct Waveform {
  std::vector<double> samples;  // mono, in [-1, 1]
  int sample_rate = 16000;
};

// Minimal canonical RIFF/WAVE, 16-bit PCM mono only.
void write_wav_pcm16(const std::string& path, const Waveform& wave);
Waveform read_wav_pcm16(const std::string& path);

}  // namespace toat
