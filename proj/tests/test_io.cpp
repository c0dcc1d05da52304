#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "sonomesh/formats.hpp"
#include "sonomesh/io.hpp"

using namespace sonomesh;
namespace fs = std::filesystem;

static fs::path tmpdir() {
    auto d = fs::temp_directory_path() / "sonomesh_io_test";
    fs::create_directories(d);
    return d;
}

TEST_CASE("WAV round-trip is bit-exact for float32 payloads") {
    SampleBuffer b;
    b.f_s = 96000.0;
    for (int i = 0; i < 257; ++i) b.samples.push_back(static_cast<float>(std::sin(i * 0.1)));
    const auto p = tmpdir() / "t.wav";
    io::write_wav(p, b);
    const SampleBuffer r = io::read_wav(p);
    CHECK(r.f_s == 96000.0);
    REQUIRE(r.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < r.samples.size(); ++i)
        CHECK(static_cast<float>(r.samples[i]) == static_cast<float>(b.samples[i]));
}

TEST_CASE("CBUF round-trip and magic check") {
    ComplexBuffer b;
    b.f_s = 96000.0;
    for (int i = 0; i < 33; ++i)
        b.samples.push_back(cplx(static_cast<float>(i), static_cast<float>(-i)));
    const auto p = tmpdir() / "t.cbuf";
    io::write_cbuf(p, b);
    const ComplexBuffer r = io::read_cbuf(p);
    REQUIRE(r.samples.size() == 33);
    CHECK(r.f_s == 96000.0);
    for (std::size_t i = 0; i < 33; ++i) CHECK(r.samples[i] == b.samples[i]);
    io::atomic_write(p, "XXXX garbage");
    CHECK_THROWS_AS(io::read_cbuf(p), IoError);
}

TEST_CASE("CBUF header layout is exactly as documented") {
    ComplexBuffer b;
    b.f_s = 48000.0;
    b.samples = {cplx(1.0f, 2.0f)};
    const auto p = tmpdir() / "layout.cbuf";
    io::write_cbuf(p, b);
    const std::string raw = io::read_file(p);
    REQUIRE(raw.size() == 4 + 4 + 4 + 8);
    CHECK(raw.substr(0, 4) == "CBUF");
    CHECK(static_cast<unsigned char>(raw[4]) == 1);  // length LE
    // sample rate 48000 = 0xBB80 little-endian
    CHECK(static_cast<unsigned char>(raw[8]) == 0x80);
    CHECK(static_cast<unsigned char>(raw[9]) == 0xBB);
}

TEST_CASE("PGM is P5 16-bit max-normalized") {
    const auto p = tmpdir() / "t.pgm";
    io::write_pgm(p, {0.0, 0.5, 1.0, 2.0}, 2, 2);
    const std::string raw = io::read_file(p);
    CHECK(raw.rfind("P5\n2 2\n65535\n", 0) == 0);
    const std::size_t off = raw.size() - 8;
    const auto hi = static_cast<unsigned char>(raw[off + 6]);
    const auto lo = static_cast<unsigned char>(raw[off + 7]);
    CHECK((hi << 8 | lo) == 65535);  // max pixel hits full scale
}

TEST_CASE("tensor checkpoint round-trip and validation") {
    std::vector<io::TensorBlob> blobs;
    blobs.push_back({{2, 3}, {1, 2, 3, 4, 5, 6}});
    blobs.push_back({{4}, {0.5, -0.5, 1.5, -1.5}});
    const auto p = tmpdir() / "t.regp";
    io::write_checkpoint(p, "REGP", 1, blobs);
    const auto r = io::read_checkpoint(p, "REGP", 1);
    REQUIRE(r.size() == 2);
    CHECK(r[0].dims == std::vector<std::uint32_t>{2, 3});
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(r[0].data[i] == doctest::Approx(blobs[0].data[i]));
    CHECK_THROWS_AS(io::read_checkpoint(p, "FUSP", 1), IoError);
    CHECK_THROWS_AS(io::read_checkpoint(p, "REGP", 2), IoError);
}

TEST_CASE("atomic_write leaves no artifact on missing directory") {
    CHECK_THROWS_AS(io::atomic_write(tmpdir() / "no_such_dir" / "x.bin", "data"), IoError);
    CHECK(!fs::exists(tmpdir() / "no_such_dir"));
}

TEST_CASE("PMTX round-trip preserves shape and payload") {
    ProfileMatrix m;
    m.M = 4;
    m.N = 3;
    m.f_s = 96000.0;
    m.k = 4.0e5;
    m.data.resize(12);
    for (std::size_t i = 0; i < 12; ++i)
        m.data[i] = cplx(static_cast<float>(i) * 0.25f, -static_cast<float>(i));
    const auto p = tmpdir() / "t.pmtx";
    io::write_pmtx(p, m);
    const ProfileMatrix r = io::read_pmtx(p);
    CHECK(r.M == 4);
    CHECK(r.N == 3);
    CHECK(r.f_s == 96000.0);
    CHECK(r.k == 4.0e5);
    for (std::size_t i = 0; i < 12; ++i) CHECK(r.data[i] == m.data[i]);
    const std::string raw = io::read_file(p);
    CHECK(raw.substr(0, 4) == "PMTX");
    CHECK(raw.size() == 4 + 4 + 4 + 4 + 8 + 12 * 8);
}

TEST_CASE("AIMG round-trip preserves metadata") {
    AcousticImage img;
    img.rows = 2;
    img.cols = 3;
    img.range_bin_m = 0.042875;
    img.azimuth_bin = 0.25;
    img.pixels = {0, 1, 2, 3, 4, 5};
    const auto p = tmpdir() / "t.aimg";
    io::write_aimg(p, img);
    const AcousticImage r = io::read_aimg(p);
    CHECK(r.rows == 2);
    CHECK(r.cols == 3);
    CHECK(r.range_bin_m == doctest::Approx(0.042875));
    CHECK(r.azimuth_bin == doctest::Approx(0.25));
    for (std::size_t i = 0; i < 6; ++i) CHECK(r.pixels[i] == doctest::Approx(img.pixels[i]));
}

TEST_CASE("JointSet2D JSON round-trip keeps order, values, flags") {
    JointSet2D js;
    for (int j = 0; j < kNumJoints; ++j) js.joints[j] = {j * 1.5, j * -2.0};
    js.flagged[3] = true;
    const auto p = tmpdir() / "t.json";
    io::write_joints2d(p, js);
    const JointSet2D r = io::read_joints2d(p);
    for (int j = 0; j < kNumJoints; ++j) {
        CHECK(r.joints[j].x == doctest::Approx(js.joints[j].x));
        CHECK(r.joints[j].y == doctest::Approx(js.joints[j].y));
        CHECK(r.flagged[static_cast<std::size_t>(j)] ==
              js.flagged[static_cast<std::size_t>(j)]);
    }
    io::atomic_write(p, "{}");
    CHECK_THROWS_AS(io::read_joints2d(p), IoError);
}

TEST_CASE("JointSet3D JSON round-trip with vertices") {
    JointSet3D js;
    for (int j = 0; j < kNumJoints; ++j) js.joints[j] = {0.1 * j, -0.2 * j, 0.3 * j};
    std::vector<Vec3> verts = {{1, 2, 3}, {4, 5, 6}};
    const auto p = tmpdir() / "t3.json";
    io::write_joints3d(p, js, &verts);
    std::vector<Vec3> rverts;
    const JointSet3D r = io::read_joints3d(p, &rverts);
    CHECK(r.joints[5].z == doctest::Approx(1.5));
    REQUIRE(rverts.size() == 2);
    CHECK(rverts[1].y == doctest::Approx(5.0));
}
