#include "convo/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace convo {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kLogFloor = 1e-10;
}  // namespace

const char* const kFunctionalNames[kFunctionalCount] = {"mean", "std", "min",
                                                        "max",  "range", "median"};

int FrameSeries::valid_count() const {
    int n = 0;
    for (uint8_t m : mask) n += m ? 1 : 0;
    return n;
}

Frames frame_signal(const std::vector<double>& samples, int rate) {
    if (rate != kSampleRate)
        throw Error(ErrorKind::BadAudio, "frame_signal expects 16 kHz input");
    int64_t n = static_cast<int64_t>(samples.size());
    if (n < kFrameLen)
        throw Error(ErrorKind::TooShort,
                    std::to_string(n) + " samples, need at least " + std::to_string(kFrameLen));

    Frames frames;
    frames.count = static_cast<int>((n - kFrameLen) / kFrameHop + 1);
    frames.raw.resize(static_cast<size_t>(frames.count) * kFrameLen);
    frames.windowed.resize(static_cast<size_t>(frames.count) * kFrameLen);

    std::vector<double> window(kFrameLen);
    for (int i = 0; i < kFrameLen; ++i)
        window[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (kFrameLen - 1));

    for (int f = 0; f < frames.count; ++f) {
        const double* src = samples.data() + static_cast<size_t>(f) * kFrameHop;
        double* raw = frames.raw.data() + static_cast<size_t>(f) * kFrameLen;
        double* win = frames.windowed.data() + static_cast<size_t>(f) * kFrameLen;
        for (int i = 0; i < kFrameLen; ++i) {
            raw[i] = src[i];
            win[i] = src[i] * window[i];
        }
    }
    return frames;
}

void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
    size_t n = re.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double angle = -2.0 * kPi / static_cast<double>(len);
        double wr = std::cos(angle), wi = std::sin(angle);
        for (size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (size_t k = 0; k < len / 2; ++k) {
                size_t a = i + k, b = i + k + len / 2;
                double tr = re[b] * cr - im[b] * ci;
                double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

namespace {

// One-sided power spectrum (kNfft/2+1 bins) of a windowed frame zero-padded to kNfft.
std::vector<double> power_spectrum(const double* frame) {
    std::vector<double> re(kNfft, 0.0), im(kNfft, 0.0);
    std::copy(frame, frame + kFrameLen, re.begin());
    fft_radix2(re, im);
    std::vector<double> power(kNfft / 2 + 1);
    for (int k = 0; k <= kNfft / 2; ++k) power[k] = re[k] * re[k] + im[k] * im[k];
    return power;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// 26 triangular filters with edges equally spaced on the mel scale over
// 0-8000 Hz, evaluated at bin-center frequencies.
const std::vector<std::vector<double>>& mel_filterbank() {
    static const std::vector<std::vector<double>> bank = [] {
        std::vector<std::vector<double>> filters(kMelFilters,
                                                 std::vector<double>(kNfft / 2 + 1, 0.0));
        double mel_lo = hz_to_mel(0.0), mel_hi = hz_to_mel(kSampleRate / 2.0);
        std::vector<double> edges(kMelFilters + 2);
        for (int m = 0; m < kMelFilters + 2; ++m)
            edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (kMelFilters + 1));
        for (int m = 0; m < kMelFilters; ++m) {
            double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
            for (int k = 0; k <= kNfft / 2; ++k) {
                double f = static_cast<double>(k) * kSampleRate / kNfft;
                if (f > lo && f < mid)
                    filters[m][k] = (f - lo) / (mid - lo);
                else if (f >= mid && f < hi)
                    filters[m][k] = (hi - f) / (hi - mid);
            }
        }
        return filters;
    }();
    return bank;
}

}  // namespace

std::vector<FrameSeries> compute_mfcc(const Frames& frames) {
    const auto& bank = mel_filterbank();
    std::vector<FrameSeries> out(kMfccCount);
    for (int c = 0; c < kMfccCount; ++c) {
        out[c].lld_name = "mfcc" + std::to_string(c + 1);
        out[c].values.assign(frames.count, 0.0);
        out[c].mask.assign(frames.count, 1);
    }
    std::vector<double> log_e(kMelFilters);
    for (int f = 0; f < frames.count; ++f) {
        std::vector<double> power = power_spectrum(frames.win_frame(f));
        for (int m = 0; m < kMelFilters; ++m) {
            double e = 0.0;
            const std::vector<double>& filt = bank[m];
            for (int k = 0; k <= kNfft / 2; ++k) e += filt[k] * power[k];
            log_e[m] = std::log(std::max(e, kLogFloor));
        }
        double scale = std::sqrt(2.0 / kMelFilters);
        for (int c = 1; c <= kMfccCount; ++c) {
            double acc = 0.0;
            for (int m = 0; m < kMelFilters; ++m)
                acc += log_e[m] * std::cos(kPi * c * (m + 0.5) / kMelFilters);
            out[c - 1].values[f] = scale * acc;
        }
    }
    return out;
}

namespace {

struct NccResult {
    double r = 0.0;
    int lag = 0;
};

// Normalized cross-correlation r(tau) = sum x[i]x[i+tau] / sqrt(E0 * Etau).
double ncc_at_lag(const double* x, int n, int tau) {
    double num = 0.0, e0 = 0.0, e1 = 0.0;
    int m = n - tau;
    for (int i = 0; i < m; ++i) {
        num += x[i] * x[i + tau];
        e0 += x[i] * x[i];
        e1 += x[i + tau] * x[i + tau];
    }
    double den = std::sqrt(e0 * e1);
    return den > 0.0 ? num / den : 0.0;
}

// Full NCC curve over [lag_min, lag_max] with prefix-sum denominators.
std::vector<double> ncc_curve(const double* x, int n, int lag_min, int lag_max) {
    std::vector<double> prefix_sq(static_cast<size_t>(n) + 1, 0.0);
    for (int i = 0; i < n; ++i) prefix_sq[i + 1] = prefix_sq[i] + x[i] * x[i];
    std::vector<double> r(static_cast<size_t>(lag_max - lag_min + 1), 0.0);
    for (int tau = lag_min; tau <= lag_max; ++tau) {
        int m = n - tau;
        double num = 0.0;
        const double* a = x;
        const double* b = x + tau;
        for (int i = 0; i < m; ++i) num += a[i] * b[i];
        double e0 = prefix_sq[m];
        double e1 = prefix_sq[n] - prefix_sq[tau];
        double den = std::sqrt(e0 * e1);
        r[static_cast<size_t>(tau - lag_min)] = den > 0.0 ? num / den : 0.0;
    }
    return r;
}

}  // namespace

FrameSeries estimate_pitch(const Frames& frames, int rate) {
    int lag_min = static_cast<int>(std::floor(rate / kPitchMaxHz));
    int lag_max = static_cast<int>(std::floor(rate / kPitchMinHz));
    lag_max = std::min(lag_max, kFrameLen - 2);

    FrameSeries pitch;
    pitch.lld_name = "pitch";
    pitch.values.assign(frames.count, missing_value());
    pitch.mask.assign(frames.count, 0);

    for (int f = 0; f < frames.count; ++f) {
        const double* x = frames.raw_frame(f);
        double energy = 0.0;
        for (int i = 0; i < kFrameLen; ++i) energy += x[i] * x[i];
        double rms = std::sqrt(energy / kFrameLen);
        if (rms < kRmsGate) continue;

        std::vector<double> r = ncc_curve(x, kFrameLen, lag_min, lag_max);
        int count = static_cast<int>(r.size());
        double r_max = *std::max_element(r.begin(), r.end());
        if (r_max < kVoicingThreshold) continue;

        // Smallest-lag local maximum within 10% of the global peak; this skips
        // the near-unity peaks at period multiples that a plain argmax hits.
        int best = -1;
        for (int i = 0; i < count; ++i) {
            bool left_ok = i == 0 || r[i] >= r[i - 1];
            bool right_ok = i == count - 1 || r[i] >= r[i + 1];
            if (left_ok && right_ok && r[i] >= 0.9 * r_max) {
                best = i;
                break;
            }
        }
        if (best < 0)
            best = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
        if (r[static_cast<size_t>(best)] < kVoicingThreshold) continue;

        double delta = 0.0;
        if (best > 0 && best < count - 1) {
            double a = r[best - 1], b = r[best], c = r[best + 1];
            double denom = a - 2.0 * b + c;
            if (denom < 0.0) delta = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
        }
        double lag = static_cast<double>(lag_min + best) + delta;
        pitch.values[f] = rate / lag;
        pitch.mask[f] = 1;
    }
    return pitch;
}

FrameSeries compute_hnr(const Frames& frames, const FrameSeries& pitch, int rate) {
    FrameSeries hnr;
    hnr.lld_name = "hnr";
    hnr.values.assign(frames.count, missing_value());
    hnr.mask.assign(frames.count, 0);
    for (int f = 0; f < frames.count; ++f) {
        if (!pitch.mask[f]) continue;
        int lag = static_cast<int>(std::lround(rate / pitch.values[f]));
        lag = std::clamp(lag, 1, kFrameLen - 2);
        double r = ncc_at_lag(frames.raw_frame(f), kFrameLen, lag);
        r = std::clamp(r, 1e-6, 1.0 - 1e-6);
        hnr.values[f] = 10.0 * std::log10(r / (1.0 - r));
        hnr.mask[f] = 1;
    }
    return hnr;
}

namespace {

// |X[k]|^2 of an n-point DFT via the Goertzel recurrence.
double goertzel_power(const double* x, int n, int k) {
    double w = 2.0 * kPi * k / n;
    double coeff = 2.0 * std::cos(w);
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        s0 = x[i] + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    return s1 * s1 + s2 * s2 - coeff * s1 * s2;
}

struct PeakTrack {
    std::vector<double> positions;   // sub-sample refined peak locations
    std::vector<double> amplitudes;  // parabola vertex heights
};

// Track one positive peak per period through [begin, end).
PeakTrack track_peaks(const std::vector<double>& x, int64_t begin, int64_t end, double period_est) {
    PeakTrack track;
    int64_t n = static_cast<int64_t>(x.size());
    end = std::min(end, n);
    if (begin >= end) return track;

    auto argmax_in = [&](int64_t lo, int64_t hi) -> int64_t {
        lo = std::max(lo, static_cast<int64_t>(0));
        hi = std::min(hi, end);
        if (lo >= hi) return -1;
        int64_t best = lo;
        for (int64_t i = lo + 1; i < hi; ++i)
            if (x[static_cast<size_t>(i)] > x[static_cast<size_t>(best)]) best = i;
        return best;
    };

    int64_t first_hi = begin + static_cast<int64_t>(std::llround(1.5 * period_est));
    int64_t peak = argmax_in(begin, first_hi);
    if (peak < 0) return track;

    while (peak >= 0) {
        double pos = static_cast<double>(peak);
        double amp = x[static_cast<size_t>(peak)];
        if (peak > 0 && peak < n - 1) {
            double a = x[static_cast<size_t>(peak - 1)];
            double b = x[static_cast<size_t>(peak)];
            double c = x[static_cast<size_t>(peak + 1)];
            double denom = a - 2.0 * b + c;
            if (denom < 0.0) {
                double delta = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
                pos += delta;
                amp = b - (a - c) * (a - c) / (8.0 * denom);
            }
        }
        track.positions.push_back(pos);
        track.amplitudes.push_back(amp);

        int64_t lo = peak + static_cast<int64_t>(std::llround(0.7 * period_est));
        int64_t hi = peak + static_cast<int64_t>(std::llround(1.3 * period_est)) + 1;
        if (hi > end) break;  // a truncated window would fabricate an edge peak
        peak = argmax_in(lo, hi);
    }
    return track;
}

}  // namespace

std::pair<FrameSeries, FrameSeries> compute_jitter_shimmer(const std::vector<double>& samples,
                                                           const FrameSeries& pitch, int rate) {
    FrameSeries jitter, shimmer;
    jitter.lld_name = "jitter";
    shimmer.lld_name = "shimmer";
    int n_frames = pitch.size();
    jitter.values.assign(n_frames, missing_value());
    jitter.mask.assign(n_frames, 0);
    shimmer.values.assign(n_frames, missing_value());
    shimmer.mask.assign(n_frames, 0);

    int f = 0;
    while (f < n_frames) {
        if (!pitch.mask[f]) {
            ++f;
            continue;
        }
        int region_begin = f;
        while (f < n_frames && pitch.mask[f]) ++f;
        int region_end = f;  // exclusive

        std::vector<double> f0s;
        for (int i = region_begin; i < region_end; ++i) f0s.push_back(pitch.values[i]);
        std::sort(f0s.begin(), f0s.end());
        double f0_med = f0s[(f0s.size() - 1) / 2];
        double period_est = rate / f0_med;

        int64_t span_begin = static_cast<int64_t>(region_begin) * kFrameHop;
        int64_t span_end = static_cast<int64_t>(region_end - 1) * kFrameHop + kFrameLen;
        PeakTrack track = track_peaks(samples, span_begin, span_end, period_est);

        size_t n_periods = track.positions.size() >= 1 ? track.positions.size() - 1 : 0;
        if (n_periods < 3) continue;

        std::vector<double> periods(n_periods);
        for (size_t i = 0; i + 1 < track.positions.size(); ++i)
            periods[i] = track.positions[i + 1] - track.positions[i];

        double mean_t = std::accumulate(periods.begin(), periods.end(), 0.0) / periods.size();
        double jitter_acc = 0.0;
        for (size_t i = 1; i < periods.size(); ++i) jitter_acc += std::abs(periods[i] - periods[i - 1]);
        double jitter_value = jitter_acc / (periods.size() - 1) / mean_t;

        const std::vector<double>& amps = track.amplitudes;
        double mean_a = std::accumulate(amps.begin(), amps.end(), 0.0) / amps.size();
        double shimmer_value = missing_value();
        if (mean_a > 0.0) {
            double shim_acc = 0.0;
            for (size_t i = 1; i < amps.size(); ++i) shim_acc += std::abs(amps[i] - amps[i - 1]);
            shimmer_value = shim_acc / (amps.size() - 1) / mean_a;
        }

        for (size_t p = 0; p + 1 < track.positions.size(); ++p) {
            int64_t p_begin = static_cast<int64_t>(std::floor(track.positions[p]));
            int64_t p_end = static_cast<int64_t>(std::ceil(track.positions[p + 1]));
            int f_lo = static_cast<int>(std::max<int64_t>(0, (p_begin - kFrameLen) / kFrameHop + 1));
            int f_hi = static_cast<int>(std::min<int64_t>(n_frames - 1, p_end / kFrameHop));
            for (int i = f_lo; i <= f_hi; ++i) {
                if (i < region_begin || i >= region_end || !pitch.mask[i]) continue;
                jitter.values[i] = jitter_value;
                jitter.mask[i] = 1;
                if (!is_missing(shimmer_value)) {
                    shimmer.values[i] = shimmer_value;
                    shimmer.mask[i] = 1;
                }
            }
        }
    }
    return {jitter, shimmer};
}

SpectralSeries compute_spectral_descriptors(const Frames& frames, const FrameSeries& pitch,
                                            int rate) {
    SpectralSeries out;
    out.energy.lld_name = "energy";
    out.harmonicity.lld_name = "harmonicity";
    out.zcr.lld_name = "zcr";
    out.loudness.lld_name = "loudness";
    out.energy.values.assign(frames.count, 0.0);
    out.energy.mask.assign(frames.count, 1);
    out.harmonicity.values.assign(frames.count, missing_value());
    out.harmonicity.mask.assign(frames.count, 0);
    out.zcr.values.assign(frames.count, 0.0);
    out.zcr.mask.assign(frames.count, 1);
    out.loudness.values.assign(frames.count, 0.0);
    out.loudness.mask.assign(frames.count, 1);

    double frame_seconds = static_cast<double>(kFrameLen) / rate;

    for (int f = 0; f < frames.count; ++f) {
        std::vector<double> power = power_spectrum(frames.win_frame(f));
        double total = std::accumulate(power.begin(), power.end(), 0.0);
        out.energy.values[f] = std::log10(total + kLogFloor);

        const double* x = frames.raw_frame(f);
        int crossings = 0;
        double sq = 0.0;
        for (int i = 0; i < kFrameLen; ++i) sq += x[i] * x[i];
        for (int i = 1; i < kFrameLen; ++i)
            if (x[i - 1] * x[i] < 0.0) ++crossings;
        out.zcr.values[f] = crossings / frame_seconds;
        double rms = std::sqrt(sq / kFrameLen);
        out.loudness.values[f] = rms > 0.0 ? std::pow(rms, 0.3) : 0.0;

        if (pitch.mask[f] && sq > 0.0) {
            // Native-resolution harmonic energy ratio over the raw frame: power
            // within +-1 bin of the first five pitch multiples, against total
            // power via Parseval.
            double f0 = pitch.values[f];
            double bin_hz = static_cast<double>(rate) / kFrameLen;
            std::vector<int> bins;
            for (int h = 1; h <= kHarmonicCount; ++h) {
                int center = static_cast<int>(std::lround(h * f0 / bin_hz));
                for (int k = center - 1; k <= center + 1; ++k)
                    if (k >= 0 && k <= kFrameLen / 2) bins.push_back(k);
            }
            std::sort(bins.begin(), bins.end());
            bins.erase(std::unique(bins.begin(), bins.end()), bins.end());
            double harmonic_power = 0.0;
            for (int k : bins) {
                double p = goertzel_power(x, kFrameLen, k);
                harmonic_power += (k == 0 || k == kFrameLen / 2) ? p : 2.0 * p;
            }
            double total_power = kFrameLen * sq;  // Parseval: sum_k |X[k]|^2 = N * sum x^2
            out.harmonicity.values[f] = std::min(harmonic_power / total_power, 1.0);
            out.harmonicity.mask[f] = 1;
        }
    }
    return out;
}

std::map<std::string, double> apply_functionals(const FrameSeries& series) {
    std::vector<double> valid;
    valid.reserve(series.values.size());
    for (size_t i = 0; i < series.values.size(); ++i)
        if (series.mask[i]) valid.push_back(series.values[i]);

    std::map<std::string, double> out;
    if (valid.empty()) {
        for (const char* name : kFunctionalNames) out[name] = missing_value();
        return out;
    }

    double mean = std::accumulate(valid.begin(), valid.end(), 0.0) / valid.size();
    double var = 0.0;
    for (double v : valid) var += (v - mean) * (v - mean);
    var /= valid.size();  // population variance
    std::sort(valid.begin(), valid.end());
    double lo = valid.front(), hi = valid.back();
    double median = valid[(valid.size() - 1) / 2];  // lower of two middles for even counts

    out["mean"] = mean;
    out["std"] = std::sqrt(var);
    out["min"] = lo;
    out["max"] = hi;
    out["range"] = hi - lo;
    out["median"] = median;
    return out;
}

const std::vector<std::string>& acoustic_feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        std::vector<std::string> llds;
        for (int c = 1; c <= kMfccCount; ++c) llds.push_back("mfcc" + std::to_string(c));
        for (const char* name : {"pitch", "jitter", "shimmer", "hnr", "energy", "harmonicity",
                                 "zcr", "loudness"})
            llds.push_back(name);
        for (const std::string& lld : llds)
            for (const char* functional : kFunctionalNames)
                out.push_back(lld + "_" + functional);
        return out;
    }();
    return names;
}

std::vector<double> extract_acoustic_vector(const std::vector<double>& samples, int rate) {
    Frames frames = frame_signal(samples, rate);
    FrameSeries pitch = estimate_pitch(frames, rate);
    auto [jitter, shimmer] = compute_jitter_shimmer(samples, pitch, rate);
    FrameSeries hnr = compute_hnr(frames, pitch, rate);
    SpectralSeries spectral = compute_spectral_descriptors(frames, pitch, rate);
    std::vector<FrameSeries> mfcc = compute_mfcc(frames);

    std::vector<const FrameSeries*> series;
    for (const FrameSeries& s : mfcc) series.push_back(&s);
    series.push_back(&pitch);
    series.push_back(&jitter);
    series.push_back(&shimmer);
    series.push_back(&hnr);
    series.push_back(&spectral.energy);
    series.push_back(&spectral.harmonicity);
    series.push_back(&spectral.zcr);
    series.push_back(&spectral.loudness);

    std::vector<double> out;
    out.reserve(acoustic_feature_names().size());
    for (const FrameSeries* s : series) {
        std::map<std::string, double> functionals = apply_functionals(*s);
        for (const char* name : kFunctionalNames) out.push_back(functionals[name]);
    }
    return out;
}

}  // namespace convo
