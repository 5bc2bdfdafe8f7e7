#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace convo {

struct WavInfo {
    int sample_rate = 0;
    int channels = 0;
    int bits_per_sample = 0;
    int64_t n_samples = 0;  // per channel

    double duration_s() const {
        return sample_rate > 0 ? static_cast<double>(n_samples) / sample_rate : 0.0;
    }
};

// Header-only inspection; validates RIFF/fmt/data structure and PCM16 mono.
WavInfo read_wav_info(const std::string& path);

// Full decode to doubles in [-1, 1). Inputs at rates other than `target_rate`
// are linearly resampled. Only 16-bit PCM mono is accepted.
std::vector<double> read_wav(const std::string& path, int target_rate = 16000);

void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate = 16000);

std::vector<double> resample_linear(const std::vector<double>& samples, int from_rate, int to_rate);

}  // namespace convo
