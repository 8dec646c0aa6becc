#include "loudgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "loudgen/error.hpp"

namespace loudgen {

namespace {

constexpr double kEigenClamp = 1e-10;

struct Moments {
    Eigen::RowVectorXd mean;
    Matrix covariance;
};

Moments moments(const Matrix& x)
{
    require(x.rows() >= 2, ErrorCode::InsufficientData, "feature sets need at least two rows");
    require(x.allFinite(), ErrorCode::Domain, "feature sets must be finite");
    Moments m;
    m.mean = x.colwise().mean();
    const Matrix centered = x.rowwise() - m.mean;
    m.covariance = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    return m;
}

/// Symmetric PSD square root; negative eigenvalues within tolerance clamp to 0.
Matrix psd_sqrt(const Matrix& m, double tolerance)
{
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
    require(eig.info() == Eigen::Success, ErrorCode::Conditioning, "eigendecomposition failed");
    Eigen::VectorXd values = eig.eigenvalues();
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        require(values(i) >= -tolerance, ErrorCode::Conditioning,
                "covariance is not positive semidefinite (eigenvalue " + std::to_string(values(i)) + ")");
        values(i) = values(i) < kEigenClamp ? 0.0 : std::sqrt(values(i));
    }
    return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

} // namespace

double frechet_distance(const Matrix& a, const Matrix& b)
{
    require(a.cols() == b.cols(), ErrorCode::Dimension,
            "feature widths differ: " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
    const Moments ma = moments(a);
    const Moments mb = moments(b);
    const double scale = std::max({1.0, ma.covariance.cwiseAbs().maxCoeff(), mb.covariance.cwiseAbs().maxCoeff()});
    const double tolerance = 1e-8 * scale * static_cast<double>(a.cols());
    // Tr((Sa Sb)^(1/2)) = Tr((Sa^(1/2) Sb Sa^(1/2))^(1/2)); the inner product is
    // symmetric, which makes the two orderings agree to rounding.
    const Matrix root_a = psd_sqrt(ma.covariance, tolerance);
    const Matrix inner = root_a * mb.covariance * root_a;
    const double cross = psd_sqrt(inner, tolerance * scale).trace();
    const double value =
        (ma.mean - mb.mean).squaredNorm() + ma.covariance.trace() + mb.covariance.trace() - 2.0 * cross;
    return std::max(value, 0.0);
}

double kl_label_divergence(const Matrix& p, const Matrix& q)
{
    require(p.rows() == q.rows() && p.cols() == q.cols(), ErrorCode::Dimension, "label matrices differ in shape");
    require(p.rows() >= 1 && p.cols() >= 1, ErrorCode::InsufficientData, "label matrices are empty");
    for (const Matrix* m : {&p, &q}) {
        for (Eigen::Index r = 0; r < m->rows(); ++r) {
            require(std::abs(m->row(r).sum() - 1.0) <= 1e-6 && (m->row(r).array() >= 0.0).all(),
                    ErrorCode::Normalization, "row " + std::to_string(r) + " is not a probability vector");
        }
    }
    double total = 0.0;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        for (Eigen::Index k = 0; k < p.cols(); ++k) {
            const double pk = p(r, k);
            if (pk > 0.0) {
                total += pk * std::log(pk / std::max(q(r, k), 1e-12));
            }
        }
    }
    return std::max(total / static_cast<double>(p.rows()), 0.0);
}

PeakList energy_peaks(const std::vector<double>& energy, double frame_rate, double window_seconds, double threshold)
{
    require(frame_rate > 0.0 && window_seconds > 0.0, ErrorCode::Domain, "frame rate and window must be positive");
    PeakList peaks;
    if (energy.empty()) {
        return peaks;
    }
    const double top = *std::max_element(energy.begin(), energy.end());
    if (!(top > 0.0)) {
        return peaks;
    }
    const double level = threshold * top;
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < energy.size(); ++i) {
        const double left = i > 0 ? energy[i - 1] : -1.0;
        const double right = i + 1 < energy.size() ? energy[i + 1] : -1.0;
        // Plateaus report their first frame.
        if (energy[i] >= level && energy[i] > left && energy[i] >= right) {
            candidates.push_back(i);
        }
    }
    // Strongest first; suppress anything closer than one window.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return energy[a] > energy[b]; });
    std::vector<double> kept;
    for (const std::size_t c : candidates) {
        const double time = static_cast<double>(c) / frame_rate;
        const bool clear = std::all_of(kept.begin(), kept.end(), [&](double k) {
            return std::abs(k - time) >= window_seconds - 1e-12;
        });
        if (clear) {
            kept.push_back(time);
        }
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

PeakList energy_peaks(const AudioBuffer& signal, double window_seconds, double threshold)
{
    require(signal.frame_count() > 0, ErrorCode::InsufficientAudio, "cannot find peaks in an empty signal");
    const std::size_t window =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(window_seconds * signal.sample_rate())));
    const std::size_t hop = std::max<std::size_t>(1, window / 4);
    std::vector<double> envelope;
    const std::size_t n = signal.frame_count();
    for (std::size_t start = 0; start < n; start += hop) {
        const std::size_t end = std::min(n, start + window);
        double s = 0.0;
        for (const auto& c : signal.channels()) {
            for (std::size_t i = start; i < end; ++i) {
                s += c[i] * c[i];
            }
        }
        envelope.push_back(std::sqrt(s / static_cast<double>((end - start) * signal.channels().size())));
    }
    // Report window centers.
    const double frame_rate = static_cast<double>(signal.sample_rate()) / static_cast<double>(hop);
    PeakList peaks = energy_peaks(envelope, frame_rate, window_seconds, threshold);
    const double center = 0.5 * static_cast<double>(window) / signal.sample_rate();
    for (double& p : peaks) {
        p += center;
    }
    return peaks;
}

double av_align(const PeakList& audio, const PeakList& video, double tolerance)
{
    require(tolerance > 0.0, ErrorCode::Domain, "AV-Align tolerance must be positive");
    if (audio.empty() && video.empty()) {
        return 1.0;
    }
    std::size_t matches = 0;
    std::size_t j = 0;
    for (const double a : audio) {
        while (j < video.size() && video[j] < a - tolerance) {
            ++j;
        }
        if (j < video.size() && std::abs(video[j] - a) <= tolerance) {
            ++matches;
            ++j;
        }
    }
    const double denom = static_cast<double>(audio.size() + video.size() - matches);
    return static_cast<double>(matches) / denom;
}

double pearson_correlation(std::span<const double> a, std::span<const double> b)
{
    require(a.size() == b.size(), ErrorCode::Dimension, "pearson_correlation: length mismatch");
    require(a.size() >= 2, ErrorCode::InsufficientData, "pearson_correlation needs at least two points");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) {
        return 0.0;
    }
    return sab / std::sqrt(saa * sbb);
}

} // namespace loudgen
