#pragma once

#include <string>
#include <vector>

namespace ccsq::wav {

struct Audio {
    std::vector<double> samples; // mono, in [-1, 1] for PCM input
    int sample_rate = 0;
};

// Reads a RIFF WAV file. Accepts mono PCM 16-bit or IEEE float 32-bit;
// anything else (including stereo) is rejected with validation_error.
Audio read(const std::string& path);

// Writes mono PCM 16-bit. Samples are clipped to [-1, 1].
void write_pcm16(const std::string& path, const std::vector<double>& samples,
                 int sample_rate);

} // namespace ccsq::wav
