#include "convo/wav.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "convo/types.hpp"

namespace convo {

namespace {

uint32_t read_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
           static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

uint16_t read_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | p[1] << 8);
}

struct WavLayout {
    WavInfo info;
    std::streamoff data_offset = 0;
    uint32_t data_bytes = 0;
};

WavLayout parse_header(std::ifstream& in, const std::string& path) {
    unsigned char riff[12];
    if (!in.read(reinterpret_cast<char*>(riff), 12))
        throw Error(ErrorKind::BadAudio, path + ": truncated RIFF header");
    if (std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(riff + 8, "WAVE", 4) != 0)
        throw Error(ErrorKind::BadAudio, path + ": not a RIFF/WAVE file");

    WavLayout layout;
    bool have_fmt = false;
    while (true) {
        unsigned char chunk[8];
        if (!in.read(reinterpret_cast<char*>(chunk), 8)) break;
        uint32_t size = read_u32(chunk + 4);
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16) throw Error(ErrorKind::BadAudio, path + ": fmt chunk too small");
            unsigned char fmt[16];
            if (!in.read(reinterpret_cast<char*>(fmt), 16))
                throw Error(ErrorKind::BadAudio, path + ": truncated fmt chunk");
            uint16_t audio_format = read_u16(fmt);
            layout.info.channels = read_u16(fmt + 2);
            layout.info.sample_rate = static_cast<int>(read_u32(fmt + 4));
            layout.info.bits_per_sample = read_u16(fmt + 14);
            if (audio_format != 1)
                throw Error(ErrorKind::BadAudio, path + ": only PCM (format 1) is supported");
            in.seekg(size - 16 + (size & 1), std::ios::cur);
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            layout.data_offset = in.tellg();
            layout.data_bytes = size;
            in.seekg(size + (size & 1), std::ios::cur);
        } else {
            in.seekg(size + (size & 1), std::ios::cur);
        }
        if (!in) break;
    }
    in.clear();

    if (!have_fmt) throw Error(ErrorKind::BadAudio, path + ": missing fmt chunk");
    if (layout.data_offset == 0 && layout.data_bytes == 0)
        throw Error(ErrorKind::BadAudio, path + ": missing data chunk");
    if (layout.info.channels != 1)
        throw Error(ErrorKind::BadAudio, path + ": expected mono, got " +
                                             std::to_string(layout.info.channels) + " channels");
    if (layout.info.bits_per_sample != 16)
        throw Error(ErrorKind::BadAudio, path + ": expected 16-bit PCM, got " +
                                             std::to_string(layout.info.bits_per_sample) + " bits");
    if (layout.info.sample_rate <= 0)
        throw Error(ErrorKind::BadAudio, path + ": invalid sample rate");
    layout.info.n_samples = layout.data_bytes / 2;
    return layout;
}

std::ifstream open_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::MissingAudio, path);
    return in;
}

}  // namespace

WavInfo read_wav_info(const std::string& path) {
    std::ifstream in = open_file(path);
    return parse_header(in, path).info;
}

std::vector<double> read_wav(const std::string& path, int target_rate) {
    std::ifstream in = open_file(path);
    WavLayout layout = parse_header(in, path);

    std::vector<int16_t> raw(static_cast<size_t>(layout.info.n_samples));
    in.seekg(layout.data_offset);
    if (!in.read(reinterpret_cast<char*>(raw.data()), layout.data_bytes))
        throw Error(ErrorKind::BadAudio, path + ": truncated data chunk");

    std::vector<double> samples(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) samples[i] = raw[i] / 32768.0;

    if (layout.info.sample_rate != target_rate)
        return resample_linear(samples, layout.info.sample_rate, target_rate);
    return samples;
}

std::vector<double> resample_linear(const std::vector<double>& samples, int from_rate, int to_rate) {
    if (from_rate == to_rate || samples.empty()) return samples;
    if (samples.size() == 1) return samples;
    int64_t n = static_cast<int64_t>(samples.size());
    int64_t m = (n - 1) * to_rate / from_rate + 1;
    std::vector<double> out(static_cast<size_t>(m));
    double step = static_cast<double>(from_rate) / to_rate;
    for (int64_t j = 0; j < m; ++j) {
        double pos = j * step;
        int64_t i = static_cast<int64_t>(pos);
        if (i >= n - 1) {
            out[static_cast<size_t>(j)] = samples[static_cast<size_t>(n - 1)];
        } else {
            double frac = pos - static_cast<double>(i);
            out[static_cast<size_t>(j)] =
                samples[static_cast<size_t>(i)] * (1.0 - frac) + samples[static_cast<size_t>(i + 1)] * frac;
        }
    }
    return out;
}

void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + path + " for writing");

    uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
    uint32_t riff_size = 36 + data_bytes;
    auto put_u32 = [&](uint32_t v) {
        char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
        out.write(b, 4);
    };
    auto put_u16 = [&](uint16_t v) {
        char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
        out.write(b, 2);
    };

    out.write("RIFF", 4);
    put_u32(riff_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(static_cast<uint32_t>(sample_rate));
    put_u32(static_cast<uint32_t>(sample_rate * 2));
    put_u16(2);
    put_u16(16);
    out.write("data", 4);
    put_u32(data_bytes);

    for (double s : samples) {
        double clamped = s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s);
        int16_t v = static_cast<int16_t>(std::lrint(clamped * 32767.0));
        char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
        out.write(b, 2);
    }
    if (!out) throw Error(ErrorKind::IoError, "failed writing " + path);
}

}  // namespace convo
