#include "ccsq/wav.hpp"

#include "ccsq/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace ccsq::wav {

namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

template <typename T>
T read_le(std::ifstream& in, const std::string& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw validation_error(path + ": truncated WAV file");
    return v;
}

} // namespace

Audio read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open " + path);

    char riff[4], wave[4];
    in.read(riff, 4);
    read_le<std::uint32_t>(in, path); // riff chunk size
    in.read(wave, 4);
    if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
        throw validation_error(path + ": not a RIFF WAV file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    Audio audio;

    while (in.peek() != EOF) {
        char id[4];
        if (!in.read(id, 4)) break;
        const auto size = read_le<std::uint32_t>(in, path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            format = read_le<std::uint16_t>(in, path);
            channels = read_le<std::uint16_t>(in, path);
            rate = read_le<std::uint32_t>(in, path);
            read_le<std::uint32_t>(in, path); // byte rate
            read_le<std::uint16_t>(in, path); // block align
            bits = read_le<std::uint16_t>(in, path);
            if (size > 16) in.seekg(size - 16, std::ios::cur);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            if (!have_fmt) throw validation_error(path + ": data chunk before fmt chunk");
            if (channels != 1)
                throw validation_error(path + ": expected mono, got " +
                                       std::to_string(channels) + " channels");
            if (format == 1 && bits == 16) {
                const std::size_t n = size / 2;
                audio.samples.resize(n);
                for (std::size_t i = 0; i < n; ++i)
                    audio.samples[i] = read_le<std::int16_t>(in, path) / 32768.0;
            } else if (format == 3 && bits == 32) {
                const std::size_t n = size / 4;
                audio.samples.resize(n);
                for (std::size_t i = 0; i < n; ++i)
                    audio.samples[i] = read_le<float>(in, path);
            } else {
                throw validation_error(path + ": unsupported WAV encoding (format " +
                                       std::to_string(format) + ", " + std::to_string(bits) +
                                       " bit); need PCM16 or float32");
            }
            audio.sample_rate = static_cast<int>(rate);
            return audio;
        } else {
            in.seekg(size + (size & 1), std::ios::cur);
        }
    }
    throw validation_error(path + ": no data chunk found");
}

void write_pcm16(const std::string& path, const std::vector<double>& samples,
                 int sample_rate) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw validation_error("cannot write " + path);

    const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
    auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
    auto put_u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };

    out.write("RIFF", 4);
    put_u32(36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1); // PCM
    put_u16(1); // mono
    put_u32(static_cast<std::uint32_t>(sample_rate));
    put_u32(static_cast<std::uint32_t>(sample_rate) * 2);
    put_u16(2);
    put_u16(16);
    out.write("data", 4);
    put_u32(data_size);
    for (double s : samples) {
        const double clipped = std::clamp(s, -1.0, 1.0);
        const auto v = static_cast<std::int16_t>(std::lrint(clipped * 32767.0));
        out.write(reinterpret_cast<const char*>(&v), 2);
    }
    if (!out) throw validation_error("write failed: " + path);
}

} // namespace ccsq::wav
