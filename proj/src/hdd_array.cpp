#include "mhdd/hdd_array.hpp"

#include "mhdd/errors.hpp"
#include "mhdd/rng.hpp"
#include "mhdd/text_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mhdd {

void ArrayGeometry::validate() const {
    if (rows < 1 || cols < 1 || channels < 1) throw std::invalid_argument("array geometry must be at least 1x1x1");
    if (static_cast<double>(rows) * cols * channels > 1e9) throw std::invalid_argument("array geometry too large");
}

std::size_t ArrayGeometry::unit_count() const {
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * static_cast<std::size_t>(channels);
}

std::string to_string(const Address& a) {
    static const char names[] = "RGB";
    std::string ch = a.channel >= 0 && a.channel < 3 ? std::string(1, names[a.channel]) : std::to_string(a.channel);
    return "(" + std::to_string(a.row) + "," + std::to_string(a.col) + "," + ch + ")";
}

CapacityReport capacity_report(const ArrayGeometry& g) {
    const std::size_t pixels = static_cast<std::size_t>(g.rows) * static_cast<std::size_t>(g.cols);
    CapacityReport r;
    r.molecular_units = pixels * 3;
    r.binary_units = pixels * 3 * ArrayGeometry::bits_per_unit;
    r.ratio = static_cast<double>(r.molecular_units) / static_cast<double>(r.binary_units);
    return r;
}

MolecularArray MolecularArray::allocate(const ArrayGeometry& geometry, const ModelParams& params,
                                        const LevelCodec& codec, std::uint64_t master_seed) {
    geometry.validate();
    params.validate();
    codec.validate();
    MolecularArray a;
    a.geometry_ = geometry;
    a.params_ = params;
    a.codec_ = codec;
    a.master_seed_ = master_seed;
    const std::size_t n = geometry.unit_count();
    a.units_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) a.units_.push_back(spawn_unit(params, derive_seed(master_seed, i)));
    a.levels_.assign(n, -1);
    return a;
}

std::size_t MolecularArray::index(const Address& a) const {
    if (a.row < 0 || a.row >= geometry_.rows || a.col < 0 || a.col >= geometry_.cols || a.channel < 0 ||
        a.channel >= geometry_.channels)
        throw std::out_of_range("address " + to_string(a) + " outside the array");
    return (static_cast<std::size_t>(a.row) * geometry_.cols + a.col) * geometry_.channels + a.channel;
}

Address MolecularArray::address(std::size_t i) const {
    if (i >= units_.size()) throw std::out_of_range("unit index outside the array");
    const int ch = static_cast<int>(i % geometry_.channels);
    const std::size_t pix = i / geometry_.channels;
    return {static_cast<int>(pix / geometry_.cols), static_cast<int>(pix % geometry_.cols), ch};
}

std::optional<int> MolecularArray::written_level(const Address& a) const {
    const int l = levels_[index(a)];
    if (l < 0) return std::nullopt;
    return l;
}

void MolecularArray::mark_written(const Address& a, int level) {
    if (level < 0 || level >= codec_.n_used) throw std::out_of_range("level outside the codec range");
    levels_[index(a)] = static_cast<std::int16_t>(level);
}

WriteStatus MolecularArray::write_word(const Address& a, int value, std::optional<std::uint64_t> noise_seed) {
    const std::size_t i = index(a);
    ProgramOptions opt;
    opt.noise_seed = noise_seed;
    try {
        const auto rep = program_level(units_[i], value, codec_, params_, opt);
        units_[i] = rep.state;
        levels_[i] = static_cast<std::int16_t>(value);
        const int polarity = rep.attempts.empty() ? 0 : rep.attempts.front().polarity;
        return {rep.start_level, static_cast<int>(rep.attempts.size()), polarity, rep.nominal_V, rep.final_G};
    } catch (const program_failure& e) {
        throw program_failure(std::string(e.what()) + " at " + to_string(a), e.target_level(), e.last_G(),
                              e.last_level());
    }
}

WordRead MolecularArray::read_word(const Address& a, std::optional<std::uint64_t> noise_seed) const {
    const std::size_t i = index(a);
    const auto r = read_level(units_[i], codec_, params_, noise_seed);
    WordRead w{r.level, levels_[i] < 0, r.G_measured, r.residual};
    if (!w.unwritten) {
        const double gap = (codec_.G_hi - codec_.G_lo) / (codec_.n_used - 1);
        if (std::abs(r.G_measured - level_to_conductance(codec_, r.level)) > 0.5 * gap)
            throw decode_failure("word at " + to_string(a) + " does not decode (G = " + format_double(r.G_measured, 6) +
                                 " S)");
    }
    return w;
}

// ---------------------------------------------------------------------------

std::string MolecularArray::serialize() const {
    std::string out;
    out.reserve(units_.size() * 80 + 64);
    out += "MHDD 1 " + std::to_string(geometry_.rows) + " " + std::to_string(geometry_.cols) + " " +
           std::to_string(geometry_.channels) + "\n";
    char seed[32];
    std::snprintf(seed, sizeof seed, "%016llx", static_cast<unsigned long long>(master_seed_));
    out += std::string("# master_seed ") + seed + "\n";
    for (std::size_t i = 0; i < units_.size(); ++i) {
        const auto& u = units_[i];
        out += std::to_string(i);
        out += ' ';
        out += format_double(u.x);
        out += ' ';
        out += format_double(u.c);
        out += ' ';
        out += format_double(u.device_factor);
        out += ' ';
        out += format_double(u.elapsed_s);
        out += ' ';
        out += levels_[i] < 0 ? std::string("-") : std::to_string(levels_[i]);
        out += '\n';
    }
    char crc[32];
    std::snprintf(crc, sizeof crc, "CRC32 %08x\n", crc32_of(out));
    out += crc;
    return out;
}

namespace {

/// Splits the next line; throws format_error at end of input.
std::string_view next_line(std::string_view text, std::size_t& pos) {
    if (pos >= text.size()) throw format_error("array file truncated");
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) throw format_error("array file truncated (missing newline)");
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
}

std::vector<std::string_view> fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && line[i] == ' ') ++i;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

long long to_integer(std::string_view s, const char* what) {
    long long v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw format_error(std::string("bad ") + what);
    return v;
}

double to_real(std::string_view s, const char* what) {
    try {
        return parse_double(s);
    } catch (const std::invalid_argument&) {
        throw format_error(std::string("bad ") + what);
    }
}

}  // namespace

MolecularArray MolecularArray::deserialize(const std::string& text, const ModelParams& params,
                                           const LevelCodec& codec) {
    const std::size_t crc_at = text.rfind("CRC32 ");
    if (crc_at == std::string::npos || (crc_at > 0 && text[crc_at - 1] != '\n'))
        throw format_error("array file has no checksum line");
    {
        std::size_t p = crc_at;
        const auto f = fields(next_line(text, p));
        if (f.size() != 2 || f[1].size() != 8) throw format_error("malformed checksum line");
        if (p != text.size()) throw format_error("data after the checksum line");
        std::uint32_t want = 0;
        const auto r = std::from_chars(f[1].data(), f[1].data() + f[1].size(), want, 16);
        if (r.ec != std::errc() || r.ptr != f[1].data() + f[1].size()) throw format_error("malformed checksum");
        if (crc32_of(std::string_view(text).substr(0, crc_at)) != want) throw format_error("checksum mismatch");
    }
    const std::string_view body = std::string_view(text).substr(0, crc_at);
    std::size_t pos = 0;
    const auto head = fields(next_line(body, pos));
    if (head.size() != 5 || head[0] != "MHDD") throw format_error("not an MHDD array file");
    if (head[1] != "1") throw format_error("unsupported array file version " + std::string(head[1]));
    ArrayGeometry g;
    g.rows = static_cast<int>(to_integer(head[2], "rows"));
    g.cols = static_cast<int>(to_integer(head[3], "cols"));
    g.channels = static_cast<int>(to_integer(head[4], "channels"));
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        throw format_error(e.what());
    }
    MolecularArray a;
    a.geometry_ = g;
    a.params_ = params;
    a.codec_ = codec;
    const std::size_t n = g.unit_count();
    a.units_.reserve(n);
    a.levels_.reserve(n);
    std::size_t i = 0;
    while (pos < body.size()) {
        const auto line = next_line(body, pos);
        if (!line.empty() && line[0] == '#') {
            const auto f = fields(line);
            if (f.size() == 3 && f[1] == "master_seed") {
                const auto r = std::from_chars(f[2].data(), f[2].data() + f[2].size(), a.master_seed_, 16);
                if (r.ec != std::errc()) throw format_error("bad master_seed");
            }
            continue;
        }
        const auto f = fields(line);
        if (f.size() != 6) throw format_error("unit line " + std::to_string(i) + " needs 6 fields");
        if (to_integer(f[0], "unit index") != static_cast<long long>(i)) throw format_error("unit indices out of order");
        UnitState u;
        u.x = to_real(f[1], "x");
        u.c = to_real(f[2], "c");
        u.device_factor = to_real(f[3], "device_factor");
        u.elapsed_s = to_real(f[4], "elapsed_s");
        if (!(u.device_factor > 0.0) || !std::isfinite(u.x) || !std::isfinite(u.c) || !(u.elapsed_s >= 0.0))
            throw format_error("unit " + std::to_string(i) + " has an invalid state");
        int level = -1;
        if (f[5] != "-") {
            level = static_cast<int>(to_integer(f[5], "level"));
            if (level < 0 || level >= codec.n_used) throw format_error("unit " + std::to_string(i) + " level out of range");
        }
        a.units_.push_back(u);
        a.levels_.push_back(static_cast<std::int16_t>(level));
        ++i;
    }
    if (i != n) throw format_error("array file holds " + std::to_string(i) + " units, header says " + std::to_string(n));
    return a;
}

void MolecularArray::save(const std::string& path) const { write_file_atomic(path, serialize()); }

MolecularArray MolecularArray::load(const std::string& path, const ModelParams& params, const LevelCodec& codec) {
    return deserialize(read_file(path), params, codec);
}

}  // namespace mhdd
