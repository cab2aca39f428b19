#pragma once

#include "mhdd/hdd_array.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mhdd {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  ///< row-major R,G,B triples

    RgbImage() = default;
    RgbImage(int w, int h);
    std::uint8_t& at(int row, int col, int channel) { return data[(static_cast<std::size_t>(row) * width + col) * 3 + channel]; }
    std::uint8_t at(int row, int col, int channel) const {
        return data[(static_cast<std::size_t>(row) * width + col) * 3 + channel];
    }
    bool operator==(const RgbImage&) const = default;
};

/// One channel plane: 8-bit staging values or 6-bit words depending on the stage.
struct ChannelMatrix {
    int width = 0;
    int height = 0;
    char channel = 'R';
    std::vector<std::uint8_t> words;  ///< row-major

    std::uint8_t at(int row, int col) const { return words[static_cast<std::size_t>(row) * width + col]; }
    bool operator==(const ChannelMatrix&) const = default;
};

using ChannelSet = std::array<ChannelMatrix, 3>;

struct KeyMatrix {
    ChannelSet channels;
    std::optional<std::uint64_t> seed;  ///< absent for explicitly supplied keys

    int width() const { return channels[0].width; }
    int height() const { return channels[0].height; }
    bool operator==(const KeyMatrix&) const = default;
};

// ---------------------------------------------------------------------------
// PPM

/// P3 or P6 with maxval 255. P1, P2, P4 and P5 raise unsupported_format; malformed input raises
/// parse_error with the byte offset.
RgbImage parse_ppm(const std::string& bytes);
RgbImage load_ppm(const std::string& path);
std::string format_ppm(const RgbImage& img, bool binary = true);
void save_ppm(const RgbImage& img, const std::string& path, bool binary = true);

// ---------------------------------------------------------------------------
// Channels and words

ChannelSet decompose_rgb(const RgbImage& img);
RgbImage reassemble(const ChannelMatrix& r, const ChannelMatrix& g, const ChannelMatrix& b);

int quantize64(int v);
int dequantize(int level);
ChannelMatrix quantize_channel(const ChannelMatrix& m);
ChannelMatrix dequantize_channel(const ChannelMatrix& m);

/// SplitMix64 stream from `seed`; the low 6 bits of each output fill R, then G, then B, row-major.
KeyMatrix gen_key(std::uint64_t seed, int width, int height);
/// Key with every word of channel c equal to words[c].
KeyMatrix constant_key(int width, int height, const std::array<int, 3>& words);

int xor_word(int a, int b);
/// Six-character MSB-first binary string.
std::string word_bits(int w);
int parse_word_bits(const std::string& bits);

/// `MHDDKEY 1 <w> <h> <seed-hex|->`, then R, G, B blocks of two-digit hex words separated by blank lines.
std::string format_key(const KeyMatrix& key);
KeyMatrix parse_key(const std::string& text);
void save_key(const KeyMatrix& key, const std::string& path);
KeyMatrix load_key(const std::string& path);

/// Same block format under the header `MHDDWORDS 1 <w> <h>`.
std::string format_words(const ChannelSet& words);
ChannelSet parse_words(const std::string& text);

// ---------------------------------------------------------------------------
// In-situ pipeline

struct StoreReport {
    std::size_t writes = 0;
    std::size_t program_attempts = 0;
};

/// Writes every word to its (row, col, channel) unit. Dimensions must match the array.
StoreReport store_plaintext(MolecularArray& array, const ChannelSet& words,
                            std::optional<std::uint64_t> noise_seed = std::nullopt);

/// Reads every stored word (channel order R, G, B).
ChannelSet read_words(const MolecularArray& array, std::optional<std::uint64_t> noise_seed = std::nullopt);

struct CryptReport {
    std::size_t words = 0;
    std::size_t xor_evaluations = 0;
    std::size_t reprogrammed = 0;      ///< words whose stored level changed
    std::size_t negative_writes = 0;   ///< reprogramming that started with a negative-branch sweep
    std::size_t device_mismatches = 0; ///< device XOR differs from the arithmetic one
    std::vector<WriteStatus> writes;   ///< per word, in unit index order
};

struct CryptOptions {
    std::optional<std::uint64_t> noise_seed;
};

/// Per address: read, six XOR evaluations on the scratch unit (reset between bits, stored bit
/// as p, key bit as q, MSB first), then reprogram the stored unit to the device result.
CryptReport encrypt_in_situ(MolecularArray& array, const KeyMatrix& key, UnitState& scratch,
                            const CryptOptions& opt = {});
/// XOR is an involution, so decryption runs the same procedure.
CryptReport decrypt_in_situ(MolecularArray& array, const KeyMatrix& key, UnitState& scratch,
                            const CryptOptions& opt = {});

/// Device XOR of two words on the scratch unit.
int device_xor_word(int a, int b, UnitState& scratch, const ModelParams& params,
                    std::optional<std::uint64_t> noise_seed = std::nullopt, std::size_t* evaluations = nullptr);

struct RenderResult {
    RgbImage image;
    std::vector<std::size_t> flagged;  ///< unit indices that failed to decode (rendered as 0)
};
RenderResult render_cipher_image(const MolecularArray& array, std::optional<std::uint64_t> noise_seed = std::nullopt);

// ---------------------------------------------------------------------------
// Statistics

/// Pearson chi-square statistic of the word histogram against the uniform distribution.
double chi_square_uniform(const std::vector<int>& words, int bins = 64);
/// Upper quantile of the chi-square distribution (Wilson-Hilferty approximation).
double chi_square_critical(int dof, double p = 0.99);
double pearson(const std::vector<double>& x, const std::vector<double>& y);

std::vector<int> flatten_words(const ChannelMatrix& m);

}  // namespace mhdd
