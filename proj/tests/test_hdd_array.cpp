#include "mhdd/errors.hpp"
#include "mhdd/hdd_array.hpp"
#include "mhdd/rng.hpp"
#include "mhdd/text_io.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>

using namespace mhdd;
using Catch::Approx;

namespace {

MolecularArray small_array(std::uint64_t seed = 7) {
    return MolecularArray::allocate({2, 3, 3}, ModelParams::calibrated(), LevelCodec{}, seed);
}

}  // namespace

TEST_CASE("crc32 matches the standard check value", "[array]") {
    CHECK(crc32_of("123456789") == 0xCBF43926u);
    CHECK(crc32_of("") == 0u);
}

TEST_CASE("addresses are row-major with channel fastest", "[array]") {
    const auto a = small_array();
    CHECK(a.size() == 18);
    CHECK(a.index({0, 0, 0}) == 0);
    CHECK(a.index({0, 0, 2}) == 2);
    CHECK(a.index({0, 1, 0}) == 3);
    CHECK(a.index({1, 2, 1}) == 16);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.index(a.address(i)) == i);
    CHECK_THROWS_AS(a.index({2, 0, 0}), std::out_of_range);
    CHECK_THROWS_AS(a.index({0, -1, 0}), std::out_of_range);
    CHECK_THROWS_AS(a.index({0, 0, 3}), std::out_of_range);
    CHECK(to_string(Address{1, 2, 0}) == "(1,2,R)");
}

TEST_CASE("allocation is deterministic per seed", "[array]") {
    const auto a = small_array(7), b = small_array(7), c = small_array(8);
    CHECK(a.serialize() == b.serialize());
    CHECK(a.serialize() != c.serialize());
    const auto p = ModelParams::calibrated();
    CHECK(a.unit_at(5).device_factor == spawn_unit(p, derive_seed(7, 5)).device_factor);
    CHECK_THROWS_AS(MolecularArray::allocate({0, 3, 3}, p, LevelCodec{}, 1), std::invalid_argument);
}

TEST_CASE("capacity relative to binary storage", "[array]") {
    const auto r = capacity_report({128, 128, 3});
    CHECK(r.molecular_units == 49152);
    CHECK(r.binary_units == 294912);
    CHECK(r.ratio == Approx(1.0 / 6.0));
}

TEST_CASE("words write and read back", "[array]") {
    auto a = small_array();
    CHECK(a.read_word({0, 0, 0}).unwritten);
    CHECK_FALSE(a.written_level({0, 0, 0}).has_value());
    int v = 0;
    for (std::size_t i = 0; i < a.size(); ++i, v = (v + 23) % 64) a.write_word(a.address(i), v, derive_seed(1, i));
    v = 0;
    for (std::size_t i = 0; i < a.size(); ++i, v = (v + 23) % 64) {
        const auto w = a.read_word(a.address(i), derive_seed(2, i));
        CHECK(w.value == v);
        CHECK_FALSE(w.unwritten);
        CHECK(a.written_level(a.address(i)) == v);
    }
    CHECK_THROWS_AS(a.write_word({0, 0, 0}, 64), std::out_of_range);
}

TEST_CASE("a disturbed unit fails to decode", "[array]") {
    auto a = small_array();
    a.write_word({0, 0, 0}, 30);
    a.mutable_unit({0, 0, 0}) = UnitState{};
    CHECK_THROWS_AS(a.read_word({0, 0, 0}), decode_failure);
}

TEST_CASE("serialization round-trips bit-identically", "[array]") {
    auto a = small_array();
    for (std::size_t i = 0; i < a.size(); i += 2) a.write_word(a.address(i), static_cast<int>(i * 3), derive_seed(4, i));
    const auto text = a.serialize();
    const auto b = MolecularArray::deserialize(text, a.params(), a.codec());
    CHECK(b.serialize() == text);
    CHECK(b.master_seed() == a.master_seed());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(b.unit_at(i) == a.unit_at(i));
        const auto ra = a.read_word(a.address(i), 9), rb = b.read_word(b.address(i), 9);
        CHECK(ra.G == rb.G);
        CHECK(ra.value == rb.value);
        CHECK(ra.unwritten == rb.unwritten);
    }
    const auto path = (std::filesystem::temp_directory_path() / "mhdd_roundtrip.mhdd").string();
    a.save(path);
    CHECK(MolecularArray::load(path, a.params(), a.codec()).serialize() == text);
    std::filesystem::remove(path);
}

TEST_CASE("every truncation is rejected", "[array]") {
    const auto text = small_array().serialize();
    for (std::size_t n = 0; n < text.size(); ++n) {
        INFO("length " << n);
        CHECK_THROWS_AS(MolecularArray::deserialize(text.substr(0, n), ModelParams::calibrated(), LevelCodec{}),
                        format_error);
    }
}

TEST_CASE("corruption and bad headers are rejected", "[array]") {
    const auto p = ModelParams::calibrated();
    const LevelCodec c;
    const auto text = small_array().serialize();
    auto flipped = text;
    flipped[text.find('\n') + 20] ^= 0x01;
    CHECK_THROWS_AS(MolecularArray::deserialize(flipped, p, c), format_error);
    CHECK_THROWS_AS(MolecularArray::deserialize(text + "x", p, c), format_error);
    auto reheader = [&](const std::string& head) {
        std::string body = head + text.substr(text.find('\n'));
        body = body.substr(0, body.rfind("CRC32 "));
        char crc[32];
        std::snprintf(crc, sizeof crc, "CRC32 %08x\n", crc32_of(body));
        return body + crc;
    };
    CHECK_NOTHROW(MolecularArray::deserialize(reheader("MHDD 1 2 3 3"), p, c));
    CHECK_THROWS_AS(MolecularArray::deserialize(reheader("MHDD 2 2 3 3"), p, c), format_error);
    CHECK_THROWS_AS(MolecularArray::deserialize(reheader("MHDD 1 2 2 3"), p, c), format_error);
    CHECK_THROWS_AS(MolecularArray::deserialize(reheader("XHDD 1 2 3 3"), p, c), format_error);
    CHECK_THROWS_AS(MolecularArray::deserialize(reheader("MHDD 1 0 3 3"), p, c), format_error);
}
