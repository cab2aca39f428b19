#pragma once

#include "mhdd/device_model.hpp"
#include "mhdd/level_codec.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mhdd {

struct ArrayGeometry {
    int rows = 1;
    int cols = 1;
    int channels = 3;
    static constexpr int bits_per_unit = 6;

    void validate() const;
    std::size_t unit_count() const;
    bool operator==(const ArrayGeometry&) const = default;
};

/// Channel 0, 1, 2 = R, G, B.
struct Address {
    int row = 0;
    int col = 0;
    int channel = 0;
};

std::string to_string(const Address& a);

struct WordRead {
    int value = 0;
    bool unwritten = false;  ///< the unit was never programmed; value is a decode of its pristine state
    double G = 0.0;          ///< stored-level conductance, S
    double residual = 0.0;
};

struct WriteStatus {
    int start_level = 0;
    int attempts = 0;  ///< programming waveforms issued (0 when the value was already stored)
    int polarity = 0;  ///< polarity of the first programming waveform, 0 when none was issued
    double nominal_V = 0.0;
    double final_G = 0.0;
};

struct CapacityReport {
    std::size_t molecular_units = 0;
    std::size_t binary_units = 0;
    double ratio = 0.0;
};

CapacityReport capacity_report(const ArrayGeometry& g);

class MolecularArray {
public:
    /// Pristine units with device factors derived from (master_seed, unit index).
    static MolecularArray allocate(const ArrayGeometry& geometry, const ModelParams& params, const LevelCodec& codec,
                                   std::uint64_t master_seed);

    const ArrayGeometry& geometry() const { return geometry_; }
    const ModelParams& params() const { return params_; }
    const LevelCodec& codec() const { return codec_; }
    std::uint64_t master_seed() const { return master_seed_; }
    std::size_t size() const { return units_.size(); }

    /// Row-major, channel fastest. Throws std::out_of_range.
    std::size_t index(const Address& a) const;
    Address address(std::size_t index) const;

    const UnitState& unit(const Address& a) const { return units_[index(a)]; }
    const UnitState& unit_at(std::size_t i) const { return units_.at(i); }
    /// Direct access for in-situ operations; marks nothing as written.
    UnitState& mutable_unit(const Address& a) { return units_[index(a)]; }
    std::optional<int> written_level(const Address& a) const;
    void mark_written(const Address& a, int level);

    WriteStatus write_word(const Address& a, int value, std::optional<std::uint64_t> noise_seed = std::nullopt);
    /// Side-effect free. Throws decode_failure when a written unit does not decode.
    WordRead read_word(const Address& a, std::optional<std::uint64_t> noise_seed = std::nullopt) const;

    std::string serialize() const;
    static MolecularArray deserialize(const std::string& text, const ModelParams& params, const LevelCodec& codec);
    void save(const std::string& path) const;
    static MolecularArray load(const std::string& path, const ModelParams& params, const LevelCodec& codec);

private:
    ArrayGeometry geometry_;
    ModelParams params_;
    LevelCodec codec_;
    std::uint64_t master_seed_ = 0;
    std::vector<UnitState> units_;
    std::vector<std::int16_t> levels_;  ///< last written level, -1 when unwritten
};

}  // namespace mhdd
