#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "sonomesh/registration.hpp"
#include "sonomesh/rng.hpp"

using namespace sonomesh;

static AcousticImage noise_image(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    AcousticImage img;
    img.rows = rows;
    img.cols = cols;
    img.pixels.resize(rows * cols);
    Rng rng(seed);
    for (auto& p : img.pixels) p = rng.uniform(0.0, 1.0);
    return img;
}

static std::vector<RegSample> make_fixture(std::size_t n, const TemplateSkeleton& tmpl,
                                           std::uint64_t seed) {
    Rng rng(seed);
    std::vector<RegSample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].image = noise_image(32, 32, seed * 100 + i);
        for (int j = 0; j < kNumJoints; ++j) {
            out[i].joints2d[j] = {rng.uniform(2.0, 30.0), rng.uniform(2.0, 30.0)};
            out[i].gt3d.joints[j] = tmpl.joints.joints[j] +
                                    Vec3{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                                         rng.uniform(-0.03, 0.03)};
        }
    }
    return out;
}

TEST_CASE("canonical grid lattice spans the padded template box") {
    const TemplateSkeleton tmpl = TemplateSkeleton::standing();
    const CanonicalGrid grid = CanonicalGrid::lattice(tmpl, 3, 4, 5);
    CHECK(grid.points.size() == 3 * 4 * 5);
    CHECK(grid.embeddings.size() == grid.points.size());
    Vec3 lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
    for (const auto& p : grid.points) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    // every template joint sits strictly inside the lattice hull
    for (const auto& j : tmpl.joints.joints) {
        CHECK(j.x > lo.x);
        CHECK(j.x < hi.x);
        CHECK(j.y > lo.y);
        CHECK(j.y < hi.y);
    }
    CHECK_THROWS_AS(CanonicalGrid::lattice(tmpl, 0, 4, 5), ConfigError);
}

TEST_CASE("soft_match: uniform similarities average to the grid centroid") {
    const TemplateSkeleton tmpl = TemplateSkeleton::standing();
    CanonicalGrid grid = CanonicalGrid::lattice(tmpl, 3, 3, 3);
    Embedding e{};
    e[0] = 1.0;
    for (auto& g : grid.embeddings) g = e;  // all cosine similarities are 1
    const auto res = soft_match(e, grid, 1.0);
    Vec3 centroid{0, 0, 0};
    for (const auto& p : grid.points) centroid = centroid + p * (1.0 / double(grid.points.size()));
    CHECK(std::abs(res.point.x - centroid.x) < 1e-9);
    CHECK(std::abs(res.point.y - centroid.y) < 1e-9);
    CHECK(std::abs(res.point.z - centroid.z) < 1e-9);
    double wsum = 0.0;
    for (double w : res.weights) {
        CHECK(w == doctest::Approx(1.0 / double(grid.points.size())));
        wsum += w;
    }
    CHECK(wsum == doctest::Approx(1.0));
}

TEST_CASE("soft_match: low temperature converges to the best-matching grid point") {
    const TemplateSkeleton tmpl = TemplateSkeleton::standing();
    CanonicalGrid grid = CanonicalGrid::lattice(tmpl, 3, 3, 3);
    Rng rng(3);
    for (auto& g : grid.embeddings)
        for (auto& v : g) v = rng.gaussian();
    Embedding e{};
    for (auto& v : e) v = rng.gaussian();
    // oracle: the grid point with the highest cosine similarity
    std::size_t best = 0;
    double best_sim = -2.0;
    double en = 0.0;
    for (double v : e) en += v * v;
    en = std::sqrt(en);
    for (std::size_t k = 0; k < grid.points.size(); ++k) {
        double dot = 0.0, gn = 0.0;
        for (std::size_t d = 0; d < kEmbedDim; ++d) {
            dot += e[d] * grid.embeddings[k][d];
            gn += grid.embeddings[k][d] * grid.embeddings[k][d];
        }
        const double sim = dot / (en * std::sqrt(gn));
        if (sim > best_sim) { best_sim = sim; best = k; }
    }
    const auto res = soft_match(e, grid, 1e-3);
    CHECK(std::abs(res.point.x - grid.points[best].x) < 1e-6);
    CHECK(std::abs(res.point.y - grid.points[best].y) < 1e-6);
    CHECK(std::abs(res.point.z - grid.points[best].z) < 1e-6);
}

TEST_CASE("soft_match error paths") {
    const TemplateSkeleton tmpl = TemplateSkeleton::standing();
    CanonicalGrid grid = CanonicalGrid::lattice(tmpl, 2, 2, 2);
    Embedding e{};
    e[0] = 1.0;
    for (auto& g : grid.embeddings) g = e;
    CHECK_THROWS_AS(soft_match(Embedding{}, grid, 1.0), NumericError);
    CHECK_THROWS_AS(soft_match(e, grid, 0.0), ConfigError);
    CanonicalGrid empty;
    CHECK_THROWS_AS(soft_match(e, empty, 1.0), DomainError);
    grid.embeddings[3] = Embedding{};  // zero-norm grid entry
    CHECK_THROWS_AS(soft_match(e, grid, 1.0), NumericError);
}

TEST_CASE("embed_2d rejects out-of-image joints and is deterministic") {
    RegParams params;
    params.init(1);
    const AcousticImage img = noise_image(32, 32, 9);
    const Embedding a = embed_2d(img, {10.0, 12.0}, params);
    const Embedding b = embed_2d(img, {10.0, 12.0}, params);
    CHECK(a == b);
    CHECK_THROWS_AS(embed_2d(img, {-1.0, 5.0}, params), DomainError);
    CHECK_THROWS_AS(embed_2d(img, {5.0, 32.0}, params), DomainError);
}

TEST_CASE("freshly initialized stage2 is the identity residual, offsets stay bounded") {
    const TemplateSkeleton tmpl = TemplateSkeleton::standing();
    RegParams params;
    params.init(4);
    Embedding fused{};
    Rng rng(8);
    for (auto& v : fused) v = rng.gaussian();
    const JointSet3D out = stage2_map(fused, tmpl, params);
    for (int j = 0; j < kNumJoints; ++j) {
        CHECK(out.joints[j].x == tmpl.joints.joints[j].x);
        CHECK(out.joints[j].y == tmpl.joints.joints[j].y);
        CHECK(out.joints[j].z == tmpl.joints.joints[j].z);
    }
    // arbitrary weights can never push an offset past the tanh bound
    for (auto* p : params.all())
        for (auto& v : p->value.v) v = rng.gaussian() * 5.0;
    const JointSet3D wild = stage2_map(fused, tmpl, params);
    for (int j = 0; j < kNumJoints; ++j) {
        CHECK(std::abs(wild.joints[j].x - tmpl.joints.joints[j].x) <= kStage2Limit + 1e-12);
        CHECK(std::abs(wild.joints[j].y - tmpl.joints.joints[j].y) <= kStage2Limit + 1e-12);
        CHECK(std::abs(wild.joints[j].z - tmpl.joints.joints[j].z) <= kStage2Limit + 1e-12);
    }
}

TEST_CASE("analytic gradients agree with central finite differences") {
    const TemplateSkeleton tmpl = TemplateSkeleton::standing();
    CanonicalGrid grid = CanonicalGrid::lattice(tmpl, 3, 3, 4);
    RegParams params;
    params.init(2);
    const auto fixture = make_fixture(2, tmpl, 21);
    const double worst = grad_check(params, fixture, grid, tmpl, 1e-5);
    CHECK(worst < 1e-4);
}

TEST_CASE("grad_check rejects epsilon outside its validated range") {
    const TemplateSkeleton tmpl = TemplateSkeleton::standing();
    CanonicalGrid grid = CanonicalGrid::lattice(tmpl, 2, 2, 2);
    RegParams params;
    params.init(2);
    const auto fixture = make_fixture(1, tmpl, 5);
    CHECK_THROWS_AS(grad_check(params, fixture, grid, tmpl, 1e-8), DomainError);
    CHECK_THROWS_AS(grad_check(params, fixture, grid, tmpl, 1e-2), DomainError);
}

TEST_CASE("checkpoint round-trip restores every parameter at float32 precision") {
    RegParams params;
    params.init(11);
    const auto path = std::filesystem::temp_directory_path() / "reg_test.regp";
    params.save(path);
    RegParams loaded;
    loaded.load(path);
    auto a = params.all();
    auto b = loaded.all();
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i]->value.v.size() == b[i]->value.v.size());
        for (std::size_t k = 0; k < a[i]->value.v.size(); ++k)
            CHECK(b[i]->value.v[k] ==
                  static_cast<double>(static_cast<float>(a[i]->value.v[k])));
    }
    std::filesystem::remove(path);
}

TEST_CASE("training reduces the loss and records epochs+1 curve points") {
    const TemplateSkeleton tmpl = TemplateSkeleton::standing();
    CanonicalGrid grid = CanonicalGrid::lattice(tmpl, 3, 3, 5);
    RegParams params;
    params.init(7);
    const auto fixture = make_fixture(6, tmpl, 77);
    RegHyper hyper;
    hyper.epochs = 8;
    hyper.batch = 3;
    const TrainResult res = train_registration(fixture, params, grid, tmpl, hyper);
    REQUIRE(res.loss_curve.size() == hyper.epochs + 1);
    CHECK(res.loss_curve.back() < res.loss_curve.front());
    CHECK_THROWS_AS(train_registration({}, params, grid, tmpl, hyper), DomainError);
}

TEST_CASE("training is reproducible for a fixed seed") {
    const TemplateSkeleton tmpl = TemplateSkeleton::standing();
    const auto fixture = make_fixture(4, tmpl, 13);
    RegHyper hyper;
    hyper.epochs = 3;
    hyper.batch = 2;
    std::array<std::vector<double>, 2> curves;
    for (int run = 0; run < 2; ++run) {
        CanonicalGrid grid = CanonicalGrid::lattice(tmpl, 3, 3, 4);
        RegParams params;
        params.init(7);
        curves[run] = train_registration(fixture, params, grid, tmpl, hyper).loss_curve;
    }
    CHECK(curves[0] == curves[1]);
}
