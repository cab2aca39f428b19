#include "mhdd/crypto_pipeline.hpp"
#include "mhdd/errors.hpp"
#include "mhdd/rng.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace mhdd;
using Catch::Approx;

namespace {

RgbImage gradient(int w, int h) {
    RgbImage img(w, h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            img.at(r, c, 0) = static_cast<std::uint8_t>((r * 37 + c * 11) % 256);
            img.at(r, c, 1) = static_cast<std::uint8_t>((r * 5 + c * 53 + 17) % 256);
            img.at(r, c, 2) = static_cast<std::uint8_t>((r * c * 7 + 90) % 256);
        }
    return img;
}

std::uint64_t splitmix_ref(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

TEST_CASE("PPM round trip in both encodings", "[ppm]") {
    const auto img = gradient(5, 3);
    CHECK(parse_ppm(format_ppm(img, true)) == img);
    CHECK(parse_ppm(format_ppm(img, false)) == img);
    CHECK(format_ppm(img, true).rfind("P6\n5 3\n255\n", 0) == 0);
}

TEST_CASE("PPM headers with comments", "[ppm]") {
    const auto img = parse_ppm("P3\n# made by hand\n2 1 # size\n255\n1 2 3\n4 5 6\n");
    REQUIRE(img.width == 2);
    CHECK(img.at(0, 1, 2) == 6);
}

TEST_CASE("PPM rejects other formats and malformed input", "[ppm]") {
    for (const char* magic : {"P1", "P2", "P4", "P5"})
        CHECK_THROWS_AS(parse_ppm(std::string(magic) + "\n1 1\n255\n"), unsupported_format);
    CHECK_THROWS_AS(parse_ppm("P7\n"), parse_error);
    CHECK_THROWS_AS(parse_ppm("GIF89a"), parse_error);
    CHECK_THROWS_AS(parse_ppm("P3\n1 1\n65535\n0 0 0\n"), parse_error);
    CHECK_THROWS_AS(parse_ppm("P3\n1 1\n255\n0 0 256\n"), parse_error);
    CHECK_THROWS_AS(parse_ppm("P3\n2 1\n255\n0 0 0\n"), parse_error);
    const auto bin = format_ppm(gradient(4, 4), true);
    try {
        (void)parse_ppm(bin.substr(0, bin.size() - 5));
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(e.offset() == bin.size() - 5);
    }
}

TEST_CASE("channel decomposition and reassembly", "[channels]") {
    const auto img = gradient(6, 4);
    const auto ch = decompose_rgb(img);
    CHECK(ch[0].channel == 'R');
    CHECK(ch[2].channel == 'B');
    CHECK(ch[1].at(2, 3) == img.at(2, 3, 1));
    CHECK(reassemble(ch[0], ch[1], ch[2]) == img);
    auto bad = ch[1];
    bad.width = 5;
    CHECK_THROWS_AS(reassemble(ch[0], bad, ch[2]), std::invalid_argument);
}

TEST_CASE("64-level quantization", "[channels]") {
    for (int v = 0; v < 256; ++v) {
        CHECK(quantize64(v) == v / 4);
        CHECK(std::abs(dequantize(quantize64(v)) - v) <= 2);
    }
    CHECK(dequantize(63) == 254);
    CHECK_THROWS_AS(quantize64(256), std::out_of_range);
    CHECK_THROWS_AS(dequantize(64), std::out_of_range);
}

TEST_CASE("key generation follows the splitmix stream", "[key]") {
    const auto k = gen_key(42, 4, 3);
    std::uint64_t s = 42;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 12; ++i) CHECK(k.channels[c].words[i] == (splitmix_ref(s) & 0x3F));
    CHECK(k.seed == 42u);
    CHECK(gen_key(42, 4, 3) == k);
    CHECK_FALSE(gen_key(43, 4, 3) == k);
}

TEST_CASE("key and word files round-trip", "[key]") {
    const auto k = gen_key(5, 3, 2);
    CHECK(parse_key(format_key(k)) == k);
    const auto c = constant_key(3, 2, {22, 50, 16});
    const auto back = parse_key(format_key(c));
    CHECK(back == c);
    CHECK_FALSE(back.seed.has_value());
    CHECK(parse_words(format_words(k.channels)) == k.channels);
    auto text = format_key(k);
    CHECK_THROWS_AS(parse_key(text.substr(0, text.size() - 4)), format_error);
    CHECK_THROWS_AS(parse_key("MHDDKEY 2 1 1 -\n00\n\n00\n\n00\n"), format_error);
    CHECK_THROWS_AS(parse_key("MHDDKEY 1 1 1 -\n40\n\n00\n\n00\n"), format_error);
    CHECK_THROWS_AS(parse_words("MHDDKEY 1 1 1 -\n00\n\n00\n\n00\n"), format_error);
}

TEST_CASE("word bit strings", "[key]") {
    CHECK(word_bits(53) == "110101");
    CHECK(parse_word_bits("010110") == 22);
    CHECK(xor_word(53, 22) == 35);
    CHECK(word_bits(xor_word(parse_word_bits("000100"), parse_word_bits("110010"))) == "110110");
    CHECK(word_bits(xor_word(parse_word_bits("001000"), parse_word_bits("010000"))) == "011000");
    CHECK_THROWS_AS(parse_word_bits("01011"), std::invalid_argument);
    CHECK_THROWS_AS(parse_word_bits("01012x"), std::invalid_argument);
}

TEST_CASE("device XOR agrees with bitwise XOR", "[crypt]") {
    const auto p = ModelParams::calibrated();
    UnitState scratch;
    splitmix64 g(3);
    std::size_t evals = 0;
    for (int i = 0; i < 200; ++i) {
        const int a = static_cast<int>(g.next() % 64), b = static_cast<int>(g.next() % 64);
        REQUIRE(device_xor_word(a, b, scratch, p, derive_seed(8, i), &evals) == (a ^ b));
    }
    CHECK(evals == 1200);
}

TEST_CASE("first-pixel fixture", "[crypt]") {
    const auto p = ModelParams::calibrated();
    auto arr = MolecularArray::allocate({1, 1, 3}, p, LevelCodec{}, 1);
    ChannelSet plain;
    const int pw[3] = {53, 4, 8};
    for (int c = 0; c < 3; ++c) plain[c] = {1, 1, "RGB"[c], {static_cast<std::uint8_t>(pw[c])}};
    store_plaintext(arr, plain);
    const auto key = constant_key(1, 1, {22, 50, 16});
    UnitState scratch;
    const auto rep = encrypt_in_situ(arr, key, scratch);
    const auto cipher = read_words(arr);
    CHECK(word_bits(cipher[0].words[0]) == "100011");
    CHECK(word_bits(cipher[1].words[0]) == "110110");
    CHECK(word_bits(cipher[2].words[0]) == "011000");
    CHECK(rep.device_mismatches == 0);
    CHECK(rep.xor_evaluations == 18);
    decrypt_in_situ(arr, key, scratch);
    const auto back = read_words(arr);
    for (int c = 0; c < 3; ++c) CHECK(back[c].words[0] == pw[c]);
}

TEST_CASE("store, encrypt and decrypt a small image with noise", "[crypt]") {
    const auto p = ModelParams::calibrated();
    const auto img = gradient(8, 6);
    auto arr = MolecularArray::allocate({6, 8, 3}, p, LevelCodec{}, 21);
    ChannelSet plain;
    const auto ch = decompose_rgb(img);
    for (int c = 0; c < 3; ++c) plain[c] = quantize_channel(ch[c]);
    store_plaintext(arr, plain, 1);
    CHECK(read_words(arr, 2) == plain);
    const auto key = gen_key(42, 8, 6);
    UnitState scratch;
    CHECK(encrypt_in_situ(arr, key, scratch, {3}).device_mismatches == 0);
    const auto cipher = read_words(arr, 4);
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < cipher[c].words.size(); ++i)
            CHECK(cipher[c].words[i] == (plain[c].words[i] ^ key.channels[c].words[i]));
    const auto rendered = render_cipher_image(arr, 5);
    CHECK(rendered.flagged.empty());
    CHECK(rendered.image.at(0, 0, 0) == dequantize(cipher[0].words[0]));
    decrypt_in_situ(arr, key, scratch, {6});
    CHECK(read_words(arr, 7) == plain);
    CHECK_THROWS_AS(encrypt_in_situ(arr, gen_key(1, 4, 4), scratch), std::invalid_argument);
}

TEST_CASE("statistics helpers", "[stats]") {
    std::vector<int> flat;
    for (int i = 0; i < 640; ++i) flat.push_back(i % 64);
    CHECK(chi_square_uniform(flat) == Approx(0.0));
    std::vector<int> skew(640, 0);
    CHECK(chi_square_uniform(skew) == Approx(640.0 * 63.0));
    CHECK(chi_square_critical(63, 0.99) == Approx(92.010).epsilon(2e-3));
    CHECK(chi_square_critical(10, 0.95) == Approx(18.307).epsilon(5e-3));
    CHECK(pearson({1, 2, 3, 4}, {2, 4, 6, 8}) == Approx(1.0));
    CHECK(pearson({1, 2, 3, 4}, {8, 6, 4, 2}) == Approx(-1.0));
    CHECK(pearson({1, 2, 3, 4}, {1, -1, -1, 1}) == Approx(0.0).margin(1e-12));
    CHECK_THROWS_AS(chi_square_uniform({64}), std::out_of_range);
}
