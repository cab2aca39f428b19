#include "mhdd/crypto_pipeline.hpp"

#include "mhdd/errors.hpp"
#include "mhdd/logic_engine.hpp"
#include "mhdd/rng.hpp"
#include "mhdd/text_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mhdd {

RgbImage::RgbImage(int w, int h) : width(w), height(h) {
    if (w < 1 || h < 1) throw std::invalid_argument("image dimensions must be positive");
    data.assign(static_cast<std::size_t>(w) * h * 3, 0);
}

// ---------------------------------------------------------------------------

namespace {

class ppm_reader {
public:
    explicit ppm_reader(const std::string& s) : s_(s) {}

    /// Next header token, skipping whitespace and '#' comments.
    std::string token(const char* what) {
        skip_space();
        const std::size_t start = pos_;
        while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) && s_[pos_] != '#') ++pos_;
        if (pos_ == start) throw parse_error(std::string("missing ") + what, start);
        last_ = start;
        return s_.substr(start, pos_ - start);
    }

    int integer(const char* what, int lo, int hi) {
        const std::string t = token(what);
        if (t.size() > 9 || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
            throw parse_error(std::string("invalid ") + what, last_);
        const int v = std::stoi(t);
        if (v < lo || v > hi) throw parse_error(std::string(what) + " out of range", last_);
        return v;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }
    std::size_t last() const { return last_; }
    const std::string& text() const { return s_; }

    void skip_space() {
        while (pos_ < s_.size()) {
            if (s_[pos_] == '#') {
                while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(s_[pos_]))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;
    std::size_t last_ = 0;
};

}  // namespace

RgbImage parse_ppm(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P') throw parse_error("not a PPM file", 0);
    const char kind = bytes[1];
    if (kind == '1' || kind == '2' || kind == '4' || kind == '5')
        throw unsupported_format(std::string("P") + kind + " images are not supported (P3 and P6 only)");
    if (kind != '3' && kind != '6') throw parse_error("unknown PPM magic", 0);
    if (bytes.size() > 2 && !std::isspace(static_cast<unsigned char>(bytes[2])) && bytes[2] != '#')
        throw parse_error("malformed PPM magic", 2);
    ppm_reader rd(bytes);
    rd.advance(2);
    const int w = rd.integer("width", 1, 1 << 16);
    const int h = rd.integer("height", 1, 1 << 16);
    const int maxval = rd.integer("maxval", 0, 65535);
    if (maxval != 255) throw parse_error("maxval must be 255", rd.last());
    RgbImage img(w, h);
    const std::size_t n = img.data.size();
    if (kind == '6') {
        if (rd.pos() >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[rd.pos()])))
            throw parse_error("missing whitespace before pixel data", rd.pos());
        rd.advance(1);
        if (bytes.size() - rd.pos() < n) throw parse_error("pixel data too short", bytes.size());
        for (std::size_t i = 0; i < n; ++i) img.data[i] = static_cast<std::uint8_t>(bytes[rd.pos() + i]);
        return img;
    }
    for (std::size_t i = 0; i < n; ++i) {
        rd.skip_space();
        if (rd.pos() >= bytes.size()) throw parse_error("pixel data too short", bytes.size());
        img.data[i] = static_cast<std::uint8_t>(rd.integer("sample", 0, 255));
    }
    return img;
}

RgbImage load_ppm(const std::string& path) { return parse_ppm(read_file(path)); }

std::string format_ppm(const RgbImage& img, bool binary) {
    if (img.width < 1 || img.height < 1 || img.data.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw std::invalid_argument("inconsistent image");
    std::string out = std::string(binary ? "P6" : "P3") + "\n" + std::to_string(img.width) + " " +
                      std::to_string(img.height) + "\n255\n";
    if (binary) {
        out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
        return out;
    }
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            for (int k = 0; k < 3; ++k) {
                if (c || k) out += ' ';
                out += std::to_string(img.at(r, c, k));
            }
        }
        out += '\n';
    }
    return out;
}

void save_ppm(const RgbImage& img, const std::string& path, bool binary) {
    write_file_atomic(path, format_ppm(img, binary));
}

// ---------------------------------------------------------------------------

ChannelSet decompose_rgb(const RgbImage& img) {
    ChannelSet out;
    const char tags[] = {'R', 'G', 'B'};
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    for (int k = 0; k < 3; ++k) {
        out[k] = {img.width, img.height, tags[k], std::vector<std::uint8_t>(n)};
        for (std::size_t i = 0; i < n; ++i) out[k].words[i] = img.data[i * 3 + k];
    }
    return out;
}

RgbImage reassemble(const ChannelMatrix& r, const ChannelMatrix& g, const ChannelMatrix& b) {
    if (r.width != g.width || r.width != b.width || r.height != g.height || r.height != b.height)
        throw std::invalid_argument("channel dimensions differ");
    RgbImage img(r.width, r.height);
    const std::size_t n = static_cast<std::size_t>(r.width) * r.height;
    if (r.words.size() != n || g.words.size() != n || b.words.size() != n)
        throw std::invalid_argument("channel data does not match its dimensions");
    for (std::size_t i = 0; i < n; ++i) {
        img.data[i * 3] = r.words[i];
        img.data[i * 3 + 1] = g.words[i];
        img.data[i * 3 + 2] = b.words[i];
    }
    return img;
}

int quantize64(int v) {
    if (v < 0 || v > 255) throw std::out_of_range("8-bit value out of range");
    return v / 4;
}

int dequantize(int level) {
    if (level < 0 || level > 63) throw std::out_of_range("6-bit level out of range");
    return level * 4 + 2;
}

ChannelMatrix quantize_channel(const ChannelMatrix& m) {
    ChannelMatrix q = m;
    for (auto& w : q.words) w = static_cast<std::uint8_t>(quantize64(w));
    return q;
}

ChannelMatrix dequantize_channel(const ChannelMatrix& m) {
    ChannelMatrix d = m;
    for (auto& w : d.words) w = static_cast<std::uint8_t>(dequantize(w));
    return d;
}

KeyMatrix gen_key(std::uint64_t seed, int width, int height) {
    if (width < 1 || height < 1) throw std::invalid_argument("key dimensions must be positive");
    KeyMatrix k;
    k.seed = seed;
    splitmix64 sm(seed);
    const char tags[] = {'R', 'G', 'B'};
    const std::size_t n = static_cast<std::size_t>(width) * height;
    for (int c = 0; c < 3; ++c) {
        k.channels[c] = {width, height, tags[c], std::vector<std::uint8_t>(n)};
        for (std::size_t i = 0; i < n; ++i) k.channels[c].words[i] = static_cast<std::uint8_t>(sm.next() & 0x3F);
    }
    return k;
}

KeyMatrix constant_key(int width, int height, const std::array<int, 3>& words) {
    if (width < 1 || height < 1) throw std::invalid_argument("key dimensions must be positive");
    KeyMatrix k;
    const char tags[] = {'R', 'G', 'B'};
    for (int c = 0; c < 3; ++c) {
        if (words[c] < 0 || words[c] > 63) throw std::out_of_range("key word out of range");
        k.channels[c] = {width, height, tags[c],
                         std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height,
                                                   static_cast<std::uint8_t>(words[c]))};
    }
    return k;
}

int xor_word(int a, int b) {
    if (a < 0 || a > 63 || b < 0 || b > 63) throw std::out_of_range("word out of range");
    return a ^ b;
}

std::string word_bits(int w) {
    if (w < 0 || w > 63) throw std::out_of_range("word out of range");
    std::string s(6, '0');
    for (int i = 0; i < 6; ++i)
        if (w & (1 << (5 - i))) s[i] = '1';
    return s;
}

int parse_word_bits(const std::string& bits) {
    if (bits.size() != 6) throw std::invalid_argument("word needs 6 bits");
    int w = 0;
    for (char c : bits) {
        if (c != '0' && c != '1') throw std::invalid_argument("word bits must be 0 or 1");
        w = (w << 1) | (c - '0');
    }
    return w;
}

// ---------------------------------------------------------------------------

namespace {

std::string format_blocks(const ChannelSet& set) {
    std::string out;
    char buf[4];
    for (int c = 0; c < 3; ++c) {
        if (c) out += '\n';
        const auto& m = set[c];
        for (int r = 0; r < m.height; ++r) {
            for (int col = 0; col < m.width; ++col) {
                std::snprintf(buf, sizeof buf, "%02x", m.at(r, col));
                if (col) out += ' ';
                out += buf;
            }
            out += '\n';
        }
    }
    return out;
}

ChannelSet parse_blocks(std::istringstream& in, int w, int h) {
    ChannelSet set;
    const char tags[] = {'R', 'G', 'B'};
    std::string line;
    for (int c = 0; c < 3; ++c) {
        set[c] = {w, h, tags[c], {}};
        set[c].words.reserve(static_cast<std::size_t>(w) * h);
        if (c) {
            if (!std::getline(in, line) || !trim(line).empty())
                throw format_error("expected a blank line between channel blocks");
        }
        for (int r = 0; r < h; ++r) {
            if (!std::getline(in, line)) throw format_error("word block truncated");
            std::istringstream row(line);
            std::string tok;
            int n = 0;
            while (row >> tok) {
                if (tok.size() != 2 || !std::isxdigit(static_cast<unsigned char>(tok[0])) ||
                    !std::isxdigit(static_cast<unsigned char>(tok[1])))
                    throw format_error("words must be two hex digits");
                const int v = std::stoi(tok, nullptr, 16);
                if (v > 63) throw format_error("word exceeds 6 bits");
                set[c].words.push_back(static_cast<std::uint8_t>(v));
                ++n;
            }
            if (n != w) throw format_error("row has " + std::to_string(n) + " words, expected " + std::to_string(w));
        }
    }
    while (std::getline(in, line))
        if (!trim(line).empty()) throw format_error("unexpected data after the word blocks");
    return set;
}

std::pair<int, int> parse_dims(const std::string& ws, const std::string& hs) {
    try {
        const double w = parse_double(ws), h = parse_double(hs);
        if (w < 1 || h < 1 || w != std::floor(w) || h != std::floor(h) || w > 65536 || h > 65536) throw std::invalid_argument("");
        return {static_cast<int>(w), static_cast<int>(h)};
    } catch (const std::invalid_argument&) {
        throw format_error("invalid dimensions");
    }
}

}  // namespace

std::string format_key(const KeyMatrix& key) {
    std::string seed = "-";
    if (key.seed) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(*key.seed));
        seed = buf;
    }
    return "MHDDKEY 1 " + std::to_string(key.width()) + " " + std::to_string(key.height()) + " " + seed + "\n" +
           format_blocks(key.channels);
}

KeyMatrix parse_key(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw format_error("empty key file");
    std::istringstream head(line);
    std::string magic, version, ws, hs, seed;
    if (!(head >> magic >> version >> ws >> hs >> seed) || magic != "MHDDKEY") throw format_error("not an MHDDKEY file");
    if (version != "1") throw format_error("unsupported key file version " + version);
    const auto [w, h] = parse_dims(ws, hs);
    KeyMatrix k;
    if (seed != "-") {
        std::size_t used = 0;
        try {
            k.seed = std::stoull(seed, &used, 16);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != seed.size() || seed.size() > 16) throw format_error("invalid key seed");
    }
    k.channels = parse_blocks(in, w, h);
    return k;
}

void save_key(const KeyMatrix& key, const std::string& path) { write_file_atomic(path, format_key(key)); }

KeyMatrix load_key(const std::string& path) { return parse_key(read_file(path)); }

std::string format_words(const ChannelSet& words) {
    return "MHDDWORDS 1 " + std::to_string(words[0].width) + " " + std::to_string(words[0].height) + "\n" +
           format_blocks(words);
}

ChannelSet parse_words(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw format_error("empty word file");
    std::istringstream head(line);
    std::string magic, version, ws, hs;
    if (!(head >> magic >> version >> ws >> hs) || magic != "MHDDWORDS") throw format_error("not an MHDDWORDS file");
    if (version != "1") throw format_error("unsupported word file version " + version);
    const auto [w, h] = parse_dims(ws, hs);
    return parse_blocks(in, w, h);
}

// ---------------------------------------------------------------------------

namespace {

void check_dims(const MolecularArray& array, const ChannelSet& set, const char* what) {
    const auto& g = array.geometry();
    if (g.channels != 3) throw std::invalid_argument("image workloads need a 3-channel array");
    for (const auto& m : set)
        if (m.width != g.cols || m.height != g.rows ||
            m.words.size() != static_cast<std::size_t>(g.rows) * static_cast<std::size_t>(g.cols))
            throw std::invalid_argument(std::string(what) + " dimensions do not match the array");
}

}  // namespace

StoreReport store_plaintext(MolecularArray& array, const ChannelSet& words, std::optional<std::uint64_t> noise_seed) {
    check_dims(array, words, "plaintext");
    StoreReport rep;
    const auto& g = array.geometry();
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                const Address a{r, c, ch};
                std::optional<std::uint64_t> seed;
                if (noise_seed) seed = derive_seed(*noise_seed, array.index(a));
                const auto st = array.write_word(a, words[ch].at(r, c), seed);
                ++rep.writes;
                rep.program_attempts += static_cast<std::size_t>(st.attempts);
            }
    return rep;
}

ChannelSet read_words(const MolecularArray& array, std::optional<std::uint64_t> noise_seed) {
    const auto& g = array.geometry();
    if (g.channels != 3) throw std::invalid_argument("image workloads need a 3-channel array");
    ChannelSet out;
    const char tags[] = {'R', 'G', 'B'};
    for (int ch = 0; ch < 3; ++ch)
        out[ch] = {g.cols, g.rows, tags[ch], std::vector<std::uint8_t>(static_cast<std::size_t>(g.rows) * g.cols)};
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                const Address a{r, c, ch};
                std::optional<std::uint64_t> seed;
                if (noise_seed) seed = derive_seed(*noise_seed, array.index(a));
                out[ch].words[static_cast<std::size_t>(r) * g.cols + c] =
                    static_cast<std::uint8_t>(array.read_word(a, seed).value);
            }
    return out;
}

int device_xor_word(int a, int b, UnitState& scratch, const ModelParams& params,
                    std::optional<std::uint64_t> noise_seed, std::size_t* evaluations) {
    if (a < 0 || a > 63 || b < 0 || b > 63) throw std::out_of_range("word out of range");
    int out = 0;
    for (int bit = 5; bit >= 0; --bit) {
        reset_to_logic0(scratch, params);
        LogicOptions opt;
        if (noise_seed) opt.noise_seed = derive_seed(*noise_seed, static_cast<std::uint64_t>(bit));
        const auto r = xor_gate(scratch, (a >> bit) & 1, (b >> bit) & 1, params, opt);
        out |= r.output << bit;
        if (evaluations) ++*evaluations;
    }
    return out;
}

namespace {

CryptReport crypt(MolecularArray& array, const KeyMatrix& key, UnitState& scratch, const CryptOptions& opt) {
    check_dims(array, key.channels, "key");
    CryptReport rep;
    rep.writes.reserve(array.size());
    const auto& g = array.geometry();
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                const Address a{r, c, ch};
                const std::size_t idx = array.index(a);
                std::optional<std::uint64_t> s_read, s_xor, s_write;
                if (opt.noise_seed) {
                    const auto base = derive_seed(*opt.noise_seed, idx);
                    s_read = derive_seed(base, 0);
                    s_xor = derive_seed(base, 1);
                    s_write = derive_seed(base, 2);
                }
                const int stored = array.read_word(a, s_read).value;
                const int k = key.channels[ch].at(r, c);
                int cipher;
                try {
                    cipher = device_xor_word(stored, k, scratch, array.params(), s_xor, &rep.xor_evaluations);
                } catch (const domain_error& e) {
                    throw domain_error(std::string(e.what()) + " at " + to_string(a));
                }
                if (cipher != xor_word(stored, k)) ++rep.device_mismatches;
                const auto st = array.write_word(a, cipher, s_write);
                if (st.attempts > 0) ++rep.reprogrammed;
                if (st.polarity < 0) ++rep.negative_writes;
                rep.writes.push_back(st);
                ++rep.words;
            }
    return rep;
}

}  // namespace

CryptReport encrypt_in_situ(MolecularArray& array, const KeyMatrix& key, UnitState& scratch, const CryptOptions& opt) {
    return crypt(array, key, scratch, opt);
}

CryptReport decrypt_in_situ(MolecularArray& array, const KeyMatrix& key, UnitState& scratch, const CryptOptions& opt) {
    return crypt(array, key, scratch, opt);
}

RenderResult render_cipher_image(const MolecularArray& array, std::optional<std::uint64_t> noise_seed) {
    const auto& g = array.geometry();
    if (g.channels != 3) throw std::invalid_argument("image workloads need a 3-channel array");
    RenderResult res;
    res.image = RgbImage(g.cols, g.rows);
    for (std::size_t i = 0; i < array.size(); ++i) {
        const auto a = array.address(i);
        std::optional<std::uint64_t> seed;
        if (noise_seed) seed = derive_seed(*noise_seed, i);
        try {
            res.image.at(a.row, a.col, a.channel) = static_cast<std::uint8_t>(dequantize(array.read_word(a, seed).value));
        } catch (const decode_failure&) {
            res.flagged.push_back(i);
            res.image.at(a.row, a.col, a.channel) = 0;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------

double chi_square_uniform(const std::vector<int>& words, int bins) {
    if (bins < 2) throw std::invalid_argument("chi-square needs at least 2 bins");
    if (words.empty()) throw std::invalid_argument("chi-square needs data");
    std::vector<double> count(static_cast<std::size_t>(bins), 0.0);
    for (int w : words) {
        if (w < 0 || w >= bins) throw std::out_of_range("word outside the histogram");
        count[static_cast<std::size_t>(w)] += 1.0;
    }
    const double expected = static_cast<double>(words.size()) / bins;
    double chi2 = 0.0;
    for (double c : count) chi2 += (c - expected) * (c - expected) / expected;
    return chi2;
}

double chi_square_critical(int dof, double p) {
    if (dof < 1) throw std::invalid_argument("chi-square needs dof >= 1");
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile must lie in (0, 1)");
    // normal quantile by bisection on erfc
    double lo = -10.0, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p)
            lo = mid;
        else
            hi = mid;
    }
    const double z = 0.5 * (lo + hi);
    const double k = static_cast<double>(dof);
    const double t = 1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k));
    return k * t * t * t;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson needs two equal series of >= 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

std::vector<int> flatten_words(const ChannelMatrix& m) { return {m.words.begin(), m.words.end()}; }

}  // namespace mhdd
