#include <numbers>

#include "loudgen/diffusion.hpp"
#include "loudgen/error.hpp"
#include "test_support.hpp"

using namespace loudgen;
using Catch::Matchers::WithinAbs;

namespace {

/// Returns the exact v for a known clean latent.
class OracleV final : public TrainableDenoiser {
public:
    explicit OracleV(Matrix z0) : z0_(std::move(z0)) {}
    ParameterSet& parameters() override { return params_; }
    const ParameterSet& parameters() const override { return params_; }
    ad::Var forward(ad::Tape& tape, const Matrix& z_t, double t, const ConditionSet&) const override
    {
        const auto s = schedule_at(t);
        return tape.constant((s.alpha * z_t - z0_) / s.sigma);
    }

private:
    Matrix z0_;
    ParameterSet params_;
};

class Zero final : public TrainableDenoiser {
public:
    ParameterSet& parameters() override { return params_; }
    const ParameterSet& parameters() const override { return params_; }
    ad::Var forward(ad::Tape& tape, const Matrix& z_t, double, const ConditionSet&) const override
    {
        return tape.constant(Matrix::Zero(z_t.rows(), z_t.cols()));
    }

private:
    ParameterSet params_;
};

/// Output depends on the condition so guidance has something to act on.
class CondLinear final : public DenoiserModel {
public:
    Matrix predict(const Matrix& z_t, double t, const ConditionSet& cond) const override
    {
        return 0.3 * z_t * t + Matrix::Constant(z_t.rows(), z_t.cols(), cond.assembled.sum());
    }
};

/// Posterior-mean v for per-element Gaussian data N(mu, s^2): the function a
/// perfectly trained model converges to.
class GaussianOptimal final : public DenoiserModel {
public:
    GaussianOptimal(double mu, double s) : mu_(mu), s2_(s * s) {}
    Matrix predict(const Matrix& z_t, double t, const ConditionSet&) const override
    {
        const auto [a, sg] = schedule_at(t);
        const Matrix centered = (z_t.array() - a * mu_).matrix();
        const double denom = a * a * s2_ + sg * sg;
        const Matrix z0 = (mu_ + (a * s2_ / denom) * centered.array()).matrix();
        const Matrix eps = (sg / denom) * centered;
        return a * eps - sg * z0;
    }

private:
    double mu_, s2_;
};

/// Records the conditions it is called with.
class Spy final : public TrainableDenoiser {
public:
    ParameterSet& parameters() override { return params_; }
    const ParameterSet& parameters() const override { return params_; }
    ad::Var forward(ad::Tape& tape, const Matrix& z_t, double, const ConditionSet& cond) const override
    {
        seen.push_back(cond);
        return tape.constant(Matrix::Zero(z_t.rows(), z_t.cols()));
    }
    mutable std::vector<ConditionSet> seen;

private:
    ParameterSet params_;
};

ConditionSet some_condition(double value = 0.1)
{
    ConditionSet c = null_condition(1, 2);
    c.assembled.setConstant(value);
    c.presence = task_from_id(7);
    return c;
}

} // namespace

TEST_CASE("schedule endpoints and variance preservation")
{
    CHECK(schedule_at(0.0).alpha == 1.0);
    CHECK(schedule_at(0.0).sigma == 0.0);
    CHECK(schedule_at(1.0).alpha == 0.0);
    CHECK(schedule_at(1.0).sigma == 1.0);
    for (int i = 0; i <= 10000; ++i) {
        const auto s = schedule_at(i / 10000.0);
        REQUIRE_THAT(s.alpha * s.alpha + s.sigma * s.sigma, WithinAbs(1.0, 1e-12));
        REQUIRE_THAT(s.alpha, WithinAbs(std::cos(std::numbers::pi * i / 20000.0), 1e-15));
    }
    try {
        schedule_at(1.0001);
        FAIL("accepted t > 1");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Domain);
    }
    CHECK_THROWS_AS(schedule_at(-1e-9), Error);
}

TEST_CASE("forward sample endpoints and marginal")
{
    Rng rng(1);
    const Matrix z0 = standard_normal_matrix(rng, 3, 4);
    const Matrix eps = standard_normal_matrix(rng, 3, 4);
    CHECK(forward_sample(z0, 0.0, eps) == z0);
    CHECK(forward_sample(z0, 1.0, eps) == eps);
    CHECK_THROWS_AS(forward_sample(z0, 0.5, Matrix::Zero(4, 3)), Error);

    const double t = 0.37;
    const double sigma = schedule_at(t).sigma;
    const Matrix zero = Matrix::Zero(1, 100000);
    const Matrix draws = standard_normal_matrix(rng, 1, 100000);
    const Matrix z = forward_sample(zero, t, draws);
    CHECK(z == sigma * draws);
    const double mean = z.mean();
    const double var = (z.array() - mean).square().sum() / (z.size() - 1);
    CHECK(std::abs(var / (sigma * sigma) - 1.0) < 0.01);

    // Non-zero clean latent: mean alpha z0.
    const double alpha = schedule_at(t).alpha;
    const Matrix shifted = forward_sample(Matrix::Constant(1, 100000, 2.0), t, draws);
    CHECK_THAT(shifted.mean(), WithinAbs(2.0 * alpha, 4.0 * sigma / std::sqrt(1e5)));
}

TEST_CASE("v target and its inverse")
{
    Rng rng(2);
    const Matrix z0 = standard_normal_matrix(rng, 5, 7);
    const Matrix eps = standard_normal_matrix(rng, 5, 7);
    CHECK(v_target(z0, eps, 0.0) == eps);
    CHECK(v_target(z0, eps, 1.0) == -z0);
    for (double t : {0.0, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0}) {
        const Matrix zt = forward_sample(z0, t, eps);
        const auto back = recover_from_v(zt, v_target(z0, eps, t), t);
        CHECK((back.z0 - z0).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((back.eps - eps).cwiseAbs().maxCoeff() <= 1e-10);
    }
    for (double t : {0.2, 0.6, 0.95}) {
        const auto back = recover(Objective::Epsilon, forward_sample(z0, t, eps), eps, t);
        CHECK((back.z0 - z0).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("oracle model has zero loss")
{
    Rng rng(3);
    const Matrix z0 = standard_normal_matrix(rng, 2, 3);
    const Matrix eps = standard_normal_matrix(rng, 2, 3);
    const OracleV oracle(z0);
    for (double t : {0.1, 0.5, 0.9, 1.0}) {
        CHECK(training_loss_at(oracle, z0, some_condition(), t, eps).loss < 1e-24);
    }
}

TEST_CASE("zero model loss is the mean squared target")
{
    Rng rng(4);
    const Matrix z0 = Matrix::Zero(3, 5);
    const Matrix eps = standard_normal_matrix(rng, 3, 5);
    const Zero zero;
    for (double t : {0.0, 0.25, 0.8}) {
        const double expected = v_target(z0, eps, t).array().square().mean();
        CHECK(training_loss_at(zero, z0, some_condition(), t, eps).loss == expected);
        CHECK(training_loss_at(zero, z0, some_condition(), t, eps, Objective::Epsilon).loss ==
              eps.array().square().mean());
    }
    // Over random t and eps: E[cos^2(pi t / 2) eps^2] = 1/2.
    std::vector<TrainingExample> batch(64, TrainingExample{Matrix::Zero(4, 4), some_condition()});
    double total = 0.0;
    const int rounds = 200;
    Rng r(5);
    for (int i = 0; i < rounds; ++i) {
        total += training_loss(zero, batch, r, Objective::V, DropoutPolicy::none()).loss;
    }
    CHECK_THAT(total / rounds, WithinAbs(0.5, 0.01));
}

TEST_CASE("training loss is reproducible for a seed")
{
    const Zero zero;
    std::vector<TrainingExample> batch(3, TrainingExample{Matrix::Constant(2, 2, 0.4), some_condition()});
    Rng a(6), b(6);
    CHECK(training_loss(zero, batch, a).loss == training_loss(zero, batch, b).loss);
}

TEST_CASE("non-finite loss is reported as divergence")
{
    const OracleV broken(Matrix::Constant(1, 1, std::numeric_limits<double>::infinity()));
    try {
        training_loss_at(broken, Matrix::Zero(1, 1), some_condition(), 0.5, Matrix::Zero(1, 1));
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NumericalDivergence);
    }
}

TEST_CASE("whole-set dropout reaches the model")
{
    Spy spy;
    std::vector<TrainingExample> batch(1, TrainingExample{Matrix::Zero(1, 1), some_condition()});
    Rng rng(7);
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        training_loss(spy, batch, rng, Objective::V, DropoutPolicy{0.0, 0.1, nullptr});
    }
    const auto nulls =
        std::count_if(spy.seen.begin(), spy.seen.end(), [](const ConditionSet& c) { return c == null_condition(1, 2); });
    CHECK(std::abs(static_cast<double>(nulls) / n - 0.1) < 0.01);
}

TEST_CASE("guidance is affine in omega")
{
    const CondLinear model;
    Rng rng(8);
    const Matrix z = standard_normal_matrix(rng, 2, 3);
    const ConditionSet cond = some_condition(0.2);
    const ConditionSet null = null_condition(1, 2);
    CHECK(cfg_predict(model, z, 0.4, cond, null, 1.0) == model.predict(z, 0.4, cond));
    CHECK(cfg_predict(model, z, 0.4, cond, null, 0.0) == model.predict(z, 0.4, null));
    for (auto [w1, w2] : {std::pair{2.0, 5.0}, std::pair{0.5, 7.0}, std::pair{3.3, 0.1}}) {
        const Matrix lhs = cfg_predict(model, z, 0.4, cond, null, w1) + cfg_predict(model, z, 0.4, cond, null, w2);
        const Matrix rhs =
            cfg_predict(model, z, 0.4, cond, null, w1 + w2) + cfg_predict(model, z, 0.4, cond, null, 0.0);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("sampler converges to the oracle target")
{
    Rng rng(9);
    const Matrix target = standard_normal_matrix(rng, 3, 4);
    const OracleV oracle(target);
    for (int steps : {1, 2, 5, 10}) {
        SamplerConfig cfg;
        cfg.steps = steps;
        cfg.guidance_scale = 1.0;
        cfg.seed = 3;
        CHECK((sample(oracle, some_condition(), cfg, 3, 4) - target).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("one step returns the first clean estimate")
{
    const CondLinear model;
    SamplerConfig cfg;
    cfg.steps = 1;
    cfg.seed = 11;
    const ConditionSet cond = some_condition(0.05);
    Rng rng(11);
    const Matrix noise = standard_normal_matrix(rng, 2, 6);
    const Matrix v = cfg_predict(model, noise, 1.0, cond, null_condition(1, 2), cfg.guidance_scale);
    CHECK(sample(model, cond, cfg, 2, 6) == recover_from_v(noise, v, 1.0).z0);
}

TEST_CASE("sampler is a pure function of its inputs")
{
    const CondLinear model;
    SamplerConfig cfg;
    cfg.steps = 20;
    cfg.seed = 12;
    const Matrix a = sample(model, some_condition(), cfg, 2, 3);
    CHECK(a == sample(model, some_condition(), cfg, 2, 3));
    cfg.seed = 13;
    CHECK(a != sample(model, some_condition(), cfg, 2, 3));
    cfg.steps = 0;
    CHECK_THROWS_AS(sample(model, some_condition(), cfg, 2, 3), Error);
}

TEST_CASE("sampling Gaussian data with the converged model")
{
    const double mu = 1.5, s = 0.5;
    const GaussianOptimal model(mu, s);
    SamplerConfig cfg;
    cfg.guidance_scale = 1.0;
    cfg.seed = 21;
    const Matrix out = sample(model, null_condition(1, 1), cfg, 1, 10000);
    const double mean = out.mean();
    const double var = (out.array() - mean).square().sum() / (out.size() - 1);
    CHECK(std::abs(mean / mu - 1.0) < 0.05);
    CHECK(std::abs(var / (s * s) - 1.0) < 0.05);
}

TEST_CASE("epsilon objective sampling with the converged model")
{
    const double mu = -0.5, s = 0.8;
    const GaussianOptimal v_model(mu, s);
    struct EpsFromV final : DenoiserModel {
        const GaussianOptimal* inner;
        Matrix predict(const Matrix& z, double t, const ConditionSet& c) const override
        {
            return recover_from_v(z, inner->predict(z, t, c), t).eps;
        }
    } eps_model;
    eps_model.inner = &v_model;
    SamplerConfig cfg;
    cfg.guidance_scale = 1.0;
    cfg.seed = 22;
    cfg.objective = Objective::Epsilon;
    const Matrix out = sample(eps_model, null_condition(1, 1), cfg, 1, 10000);
    const double mean = out.mean();
    const double var = (out.array() - mean).square().sum() / (out.size() - 1);
    CHECK(std::abs(mean / mu - 1.0) < 0.05);
    CHECK(std::abs(var / (s * s) - 1.0) < 0.05);
}

TEST_CASE("sampler reports the diverging step")
{
    struct Exploding final : DenoiserModel {
        Matrix predict(const Matrix& z, double, const ConditionSet&) const override { return z * 1e300; }
    } model;
    SamplerConfig cfg;
    cfg.guidance_scale = 1.0;
    try {
        sample(model, null_condition(1, 1), cfg, 1, 2);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NumericalDivergence);
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}
