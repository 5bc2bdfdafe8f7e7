#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "convo/types.hpp"

namespace convo {

inline constexpr int kFrameLen = 400;   // 25 ms at 16 kHz
inline constexpr int kFrameHop = 160;   // 10 ms
inline constexpr int kNfft = 512;
inline constexpr int kMelFilters = 26;
inline constexpr int kMfccCount = 14;   // coefficients 1..14, c0 excluded
inline constexpr double kPitchMinHz = 60.0;
inline constexpr double kPitchMaxHz = 500.0;
inline constexpr double kVoicingThreshold = 0.45;
inline constexpr double kRmsGate = 1e-4;
inline constexpr int kHarmonicCount = 5;

// One value per frame; mask marks frames where the value is defined (voiced
// frames for voiced-only descriptors, every frame otherwise).
struct FrameSeries {
    std::string lld_name;
    std::vector<double> values;
    std::vector<uint8_t> mask;

    int size() const { return static_cast<int>(values.size()); }
    int valid_count() const;
};

struct Frames {
    int count = 0;
    std::vector<double> raw;       // count * kFrameLen, rectangular
    std::vector<double> windowed;  // count * kFrameLen, Hamming

    const double* raw_frame(int i) const { return raw.data() + static_cast<size_t>(i) * kFrameLen; }
    const double* win_frame(int i) const {
        return windowed.data() + static_cast<size_t>(i) * kFrameLen;
    }
};

// 400-sample frames, hop 160; count = floor((N-400)/160)+1. Throws TooShort for N < 400.
Frames frame_signal(const std::vector<double>& samples, int rate = kSampleRate);

// Power spectrum -> 26 triangular mel filters (0-8 kHz) -> log energies floored
// at 1e-10 -> DCT-II, coefficients 1..14.
std::vector<FrameSeries> compute_mfcc(const Frames& frames);

// Normalized cross-correlation over lags covering 60-500 Hz, smallest-lag local
// maximum within 10% of the global peak, parabolic interpolation. Voiced iff
// peak correlation >= 0.45 and frame RMS >= 1e-4.
FrameSeries estimate_pitch(const Frames& frames, int rate = kSampleRate);

// Local jitter and shimmer per voiced region (>= 3 periods), values assigned to
// the frames each period overlaps.
std::pair<FrameSeries, FrameSeries> compute_jitter_shimmer(const std::vector<double>& samples,
                                                           const FrameSeries& pitch,
                                                           int rate = kSampleRate);

// 10*log10(r/(1-r)) with r the normalized autocorrelation at the pitch lag,
// clamped away from 0 and 1.
FrameSeries compute_hnr(const Frames& frames, const FrameSeries& pitch, int rate = kSampleRate);

struct SpectralSeries {
    FrameSeries energy;
    FrameSeries harmonicity;
    FrameSeries zcr;
    FrameSeries loudness;
};

SpectralSeries compute_spectral_descriptors(const Frames& frames, const FrameSeries& pitch,
                                            int rate = kSampleRate);

struct Functionals {
    double mean = 0, std = 0, min = 0, max = 0, range = 0, median = 0;
};

inline constexpr int kFunctionalCount = 6;
extern const char* const kFunctionalNames[kFunctionalCount];

// All six functionals over the unmasked values; an empty series yields six
// missing markers.
std::map<std::string, double> apply_functionals(const FrameSeries& series);

// Fixed column order for the acoustic block: 14 MFCC series then pitch, jitter,
// shimmer, hnr, energy, harmonicity, zcr, loudness, each with the six
// functionals (mean, std, min, max, range, median).
const std::vector<std::string>& acoustic_feature_names();

// Full per-turn extraction; returns values aligned with acoustic_feature_names().
// Missing functionals (e.g. fully unvoiced turns) are NaN.
std::vector<double> extract_acoustic_vector(const std::vector<double>& samples,
                                            int rate = kSampleRate);

// Shared FFT helper (iterative radix-2, power-of-two n) exposed for reuse.
void fft_radix2(std::vector<double>& re, std::vector<double>& im);

}  // namespace convo
