#pragma once

#include <span>
#include <vector>

#include "loudgen/audio_io.hpp"
#include "loudgen/autodiff.hpp"

namespace loudgen {

/// Frechet distance between Gaussians fitted to the rows of a and b:
/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
double frechet_distance(const Matrix& a, const Matrix& b);

/// Mean over row pairs of sum_k p_k log(p_k / q_k), q floored at 1e-12.
double kl_label_divergence(const Matrix& p, const Matrix& q);

/// Strictly increasing peak times in seconds.
using PeakList = std::vector<double>;

/// Local maxima of the windowed RMS envelope (hop = window / 4, channels
/// averaged) above threshold * global max, at least one window apart.
PeakList energy_peaks(const AudioBuffer& signal, double window_seconds = 0.1, double threshold = 0.3);

/// Same detector over a precomputed per-frame energy sequence.
PeakList energy_peaks(const std::vector<double>& energy, double frame_rate, double window_seconds = 0.1,
                      double threshold = 0.3);

/// Greedy chronological matching within +-tolerance; returns
/// matches / (|A| + |V| - matches), 1 when both lists are empty.
double av_align(const PeakList& audio, const PeakList& video, double tolerance = 0.1);

/// Sample Pearson correlation; 0 when either side has no variance.
double pearson_correlation(std::span<const double> a, std::span<const double> b);

} // namespace loudgen
