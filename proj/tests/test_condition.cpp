#include <set>

#include "loudgen/condition.hpp"
#include "loudgen/error.hpp"
#include "test_support.hpp"

using namespace loudgen;
using Catch::Matchers::WithinAbs;

namespace {

ModalEmbedding embed(const SyntheticEncoder& enc, Modality m, const std::string& text)
{
    return encode_prompt(enc, ModalPayload{m, text});
}

ConditionSet full_condition(const ConditionEmbedder& embedder, const SyntheticEncoder& enc)
{
    const auto mm = embedder.build_multimodal(embed(enc, Modality::Language, "dog barks"),
                                              embed(enc, Modality::Audio, "bark.wav"),
                                              embed(enc, Modality::Video, "dog.mp4"));
    NormalizedSeries l{ChannelRole::Left, {0.2, 0.4, 0.9}};
    NormalizedSeries r{ChannelRole::Right, {0.1, 0.3}};
    return assemble(mm, embedder.build_lufs(l, r), embedder.build_timing({0.0, 4.0}));
}

class FailingEncoder final : public ModalEncoder {
public:
    ModalEmbedding encode(const ModalPayload&) const override { throw std::runtime_error("model offline"); }
    Eigen::Index rows() const override { return 2; }
    Eigen::Index width() const override { return 3; }
};

class WrongShapeEncoder final : public ModalEncoder {
public:
    ModalEmbedding encode(const ModalPayload& p) const override { return {p.modality, Matrix::Zero(1, 3)}; }
    Eigen::Index rows() const override { return 2; }
    Eigen::Index width() const override { return 3; }
};

} // namespace

TEST_CASE("synthetic encoder is deterministic with unit-norm rows")
{
    const SyntheticEncoder enc(6, 16, 3);
    const auto a = embed(enc, Modality::Language, "rain on a tin roof");
    CHECK(a.matrix == embed(enc, Modality::Language, "rain on a tin roof").matrix);
    REQUIRE(a.matrix.rows() == 6);
    REQUIRE(a.matrix.cols() == 16);
    for (Eigen::Index r = 0; r < a.matrix.rows(); ++r) {
        CHECK_THAT(a.matrix.row(r).norm(), WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("distinct payloads give distinct embeddings")
{
    const SyntheticEncoder enc(4, 8);
    std::vector<Matrix> seen;
    for (int i = 0; i < 200; ++i) {
        for (Modality m : {Modality::Language, Modality::Audio, Modality::Video}) {
            seen.push_back(embed(enc, m, "prompt " + std::to_string(i)).matrix);
        }
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        for (std::size_t j = i + 1; j < seen.size(); ++j) {
            REQUIRE(seen[i] != seen[j]);
        }
    }
}

TEST_CASE("encoder failures carry the modality")
{
    try {
        encode_prompt(FailingEncoder{}, {Modality::Video, "x"});
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Encoder);
        CHECK(std::string(e.what()).find("video") != std::string::npos);
    }
    try {
        encode_prompt(WrongShapeEncoder{}, {Modality::Audio, "x"});
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Encoder);
        CHECK(std::string(e.what()).find("audio") != std::string::npos);
    }
}

TEST_CASE("task id is the bit encoding of presence")
{
    CHECK(build_task_id(true, false, true).id == 5);
    CHECK(build_task_id(false, false, false).id == 0);
    CHECK(build_task_id(true, true, true).id == 7);
    std::set<int> ids;
    for (int l = 0; l < 2; ++l) {
        for (int a = 0; a < 2; ++a) {
            for (int v = 0; v < 2; ++v) {
                const TaskId t = build_task_id(l, a, v);
                ids.insert(t.id);
                CHECK(task_from_id(t.id) == t);
            }
        }
    }
    CHECK(ids == std::set<int>{0, 1, 2, 3, 4, 5, 6, 7});
    CHECK_THROWS_AS(task_from_id(8), Error);
}

TEST_CASE("multimodal block layout")
{
    const Eigen::Index m = 3, d = 5;
    const ConditionEmbedder embedder(m, d, 1);
    const SyntheticEncoder enc(m, d);
    const auto lang = embed(enc, Modality::Language, "l");
    const auto audio = embed(enc, Modality::Audio, "a");
    const auto video = embed(enc, Modality::Video, "v");

    const auto all = embedder.build_multimodal(lang, audio, video);
    CHECK(all.task.id == 7);
    REQUIRE(all.rows.rows() == 4 * m);
    CHECK(all.rows.middleRows(0, m) == embedder.task_embedding(all.task));
    CHECK(all.rows.middleRows(m, m) == lang.matrix);
    CHECK(all.rows.middleRows(2 * m, m) == audio.matrix);
    CHECK(all.rows.middleRows(3 * m, m) == video.matrix);

    const auto none = embedder.build_multimodal(std::nullopt, std::nullopt, std::nullopt);
    CHECK(none.task.id == 0);
    CHECK(none.rows.bottomRows(3 * m).isZero(0.0));

    const auto only_video = embedder.build_multimodal(std::nullopt, std::nullopt, video);
    CHECK(only_video.task.id == 1);
    CHECK(only_video.rows.middleRows(m, 2 * m).isZero(0.0));
    CHECK(only_video.rows.middleRows(3 * m, m) == video.matrix);

    const SyntheticEncoder other(m + 1, d);
    CHECK_THROWS_AS(embedder.build_multimodal(embed(other, Modality::Language, "l"), std::nullopt, std::nullopt),
                    Error);
}

TEST_CASE("task embeddings differ between ids")
{
    const ConditionEmbedder embedder(2, 8, 9);
    for (int i = 0; i < 8; ++i) {
        for (int j = i + 1; j < 8; ++j) {
            CHECK(embedder.task_embedding(task_from_id(i)) != embedder.task_embedding(task_from_id(j)));
        }
    }
}

TEST_CASE("linear resampling")
{
    CHECK(resample_linear(std::vector<double>{0.0, 1.0}, 3) == std::vector<double>{0.0, 0.5, 1.0});
    const std::vector<double> same{0.1, 0.7, 0.3, 0.9};
    CHECK(resample_linear(same, 4) == same);
    CHECK(resample_linear(std::vector<double>{0.5}, 5) == std::vector<double>(5, 0.5));
    const std::vector<double> constant(17, 0.5);
    for (double v : resample_linear(constant, 6)) {
        CHECK(v == 0.5);
    }
    for (std::size_t n : {2u, 3u, 7u, 60u, 361u}) {
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = std::sin(0.3 * static_cast<double>(i)) * 0.5 + 0.5;
        }
        for (std::size_t points : {2u, 5u, 8u, 100u}) {
            const auto y = resample_linear(x, points);
            REQUIRE(y.size() == points);
            CHECK(y.front() == x.front());
            CHECK(y.back() == x.back());
        }
    }
    CHECK_THROWS_AS(resample_linear(std::vector<double>{}, 3), Error);
}

TEST_CASE("lufs embedding rows follow the resampled series")
{
    const Eigen::Index m = 4, d = 6;
    const ConditionEmbedder embedder(m, d, 2);
    NormalizedSeries l{ChannelRole::Left, std::vector<double>(9, 0.5)};
    NormalizedSeries r{ChannelRole::Right, {0.0, 1.0}};
    const Matrix e = embedder.build_lufs(l, r);
    REQUIRE(e.rows() == 2 * m);
    REQUIRE(e.cols() == d);
    const Matrix half = embedder.lift_scalar(0.5);
    for (Eigen::Index i = 0; i < m; ++i) {
        CHECK(e.row(i) == half);
    }
    const auto pts = resample_linear(r.values, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        CHECK(e.row(m + i) == embedder.lift_scalar(pts[i]));
    }
    // The lift is affine.
    CHECK((embedder.lift_scalar(0.75) - (0.25 * embedder.lift_scalar(0.0) + 0.75 * embedder.lift_scalar(1.0)))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK_THROWS_AS(embedder.build_lufs(NormalizedSeries{}, r), Error);
    CHECK_THROWS_AS(embedder.build_lufs(NormalizedSeries{ChannelRole::Left, {1.2}}, r), Error);
}

TEST_CASE("timing embedding")
{
    const Eigen::Index m = 3, d = 8;
    const ConditionEmbedder embedder(m, d, 4);
    const Matrix a = embedder.build_timing({21.5, 180.0});
    const Matrix b = embedder.build_timing({0.0, 180.0});
    REQUIRE(a.rows() == 2 * m);
    REQUIRE(a.cols() == d);
    CHECK(a != b);
    CHECK(a == embedder.build_timing({21.5, 180.0}));
    CHECK(b.topRows(m) == embedder.embed_seconds(0.0).replicate(m, 1));
    CHECK(a.bottomRows(m) == b.bottomRows(m));
    CHECK_THROWS_AS(embedder.build_timing({-1.0, 10.0}), Error);
    CHECK_THROWS_AS(embedder.build_timing({0.0, 0.0}), Error);
}

TEST_CASE("assembled shape and block order")
{
    for (Eigen::Index m : {1, 2, 4, 7}) {
        for (Eigen::Index d : {1, 3, 8, 32}) {
            const ConditionEmbedder embedder(m, d, 5);
            const SyntheticEncoder enc(m, d);
            const ConditionSet c = full_condition(embedder, enc);
            REQUIRE(c.assembled.rows() == 8 * m);
            REQUIRE(c.assembled.cols() == d);
            CHECK(c.block(ConditionSet::Language) == embed(enc, Modality::Language, "dog barks").matrix);
            CHECK(c.block(ConditionSet::Video) == embed(enc, Modality::Video, "dog.mp4").matrix);
            CHECK(c.block(ConditionSet::TimingStart) == embedder.embed_seconds(0.0).replicate(m, 1));
            CHECK(c.block(ConditionSet::TimingTotal) == embedder.embed_seconds(4.0).replicate(m, 1));
            const auto left = resample_linear(std::vector<double>{0.2, 0.4, 0.9}, static_cast<std::size_t>(m));
            CHECK(c.block(ConditionSet::LufsLeft).row(0) == embedder.lift_scalar(left.front()));
            CHECK(c.block(ConditionSet::LufsRight).row(m - 1) == embedder.lift_scalar(0.3));
        }
    }
}

TEST_CASE("assemble stacks without mixing entries")
{
    const ConditionEmbedder embedder(4, 8, 6);
    const auto mm = embedder.build_multimodal(std::nullopt, std::nullopt, std::nullopt);
    const Matrix lufs = embedder.build_lufs({ChannelRole::Left, {0.5}}, {ChannelRole::Right, {0.5}});
    const Matrix timing = embedder.build_timing({0.0, 2.0});
    const ConditionSet a = assemble(mm, lufs, timing);
    CHECK(a.assembled.rows() == 32);
    CHECK(a.assembled.topRows(16) == mm.rows);
    Matrix lufs2 = lufs;
    lufs2(3, 5) += 1.0;
    const ConditionSet b = assemble(mm, lufs2, timing);
    CHECK(((a.assembled - b.assembled).array() != 0.0).count() == 1);
    CHECK(b.assembled(16 + 3, 5) == lufs2(3, 5));
    CHECK_THROWS_AS(assemble(mm, lufs.topRows(7), timing), Error);
}

TEST_CASE("modality mask probabilities")
{
    const SyntheticEncoder enc(2, 4);
    const std::array<ModalEmbedding, 3> e{embed(enc, Modality::Language, "l"), embed(enc, Modality::Audio, "a"),
                                          embed(enc, Modality::Video, "v")};
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        for (const auto& kept : mask_for_training(e, rng, 0.0)) {
            REQUIRE(kept.has_value());
        }
        for (const auto& kept : mask_for_training(e, rng, 1.0)) {
            REQUIRE_FALSE(kept.has_value());
        }
    }
    Rng a(77), b(77);
    for (int i = 0; i < 50; ++i) {
        const auto x = mask_for_training(e, a);
        const auto y = mask_for_training(e, b);
        for (int k = 0; k < 3; ++k) {
            REQUIRE(x[k].has_value() == y[k].has_value());
        }
    }
}

TEST_CASE("condition dropout keeps the task block consistent")
{
    const ConditionEmbedder embedder(2, 4, 8);
    const ConditionSet full = full_condition(embedder, SyntheticEncoder(2, 4));
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const ConditionSet c = embedder.apply_modality_dropout(full, rng);
        REQUIRE(c.block(ConditionSet::Task) == embedder.task_embedding(c.presence));
        if (!c.presence.language) {
            REQUIRE(c.block(ConditionSet::Language).isZero(0.0));
        }
        REQUIRE(c.block(ConditionSet::LufsLeft) == full.block(ConditionSet::LufsLeft));
    }
    Rng r0(0);
    CHECK(drop_all_for_cfg(full, r0, 0.0) == full);
    CHECK(drop_all_for_cfg(full, r0, 1.0) == null_condition(2, 4));
    const ConditionSet n = null_condition(2, 4);
    CHECK(n.presence.id == 0);
    CHECK(n.assembled.rows() == 16);
    CHECK(n.assembled.isZero(0.0));
}

TEST_CASE("embedder tables round trip through a parameter set")
{
    const ConditionEmbedder a(3, 5, 12);
    const ConditionEmbedder b(3, 5, a.parameters());
    CHECK(b.task_embedding(task_from_id(6)) == a.task_embedding(task_from_id(6)));
    CHECK_THROWS_AS(ConditionEmbedder(4, 5, a.parameters()), Error);
}
