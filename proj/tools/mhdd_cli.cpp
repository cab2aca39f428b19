#include "mhdd/calibration.hpp"
#include "mhdd/crypto_pipeline.hpp"
#include "mhdd/device_model.hpp"
#include "mhdd/errors.hpp"
#include "mhdd/hdd_array.hpp"
#include "mhdd/level_codec.hpp"
#include "mhdd/logic_engine.hpp"
#include "mhdd/rng.hpp"
#include "mhdd/text_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mhdd;

namespace {

struct Globals {
    std::string params_path;
    std::string codec_path;
    std::string out_dir;
    std::uint64_t seed = 1;
    bool noise = false;
    bool dry_run = false;
};

/// Loaded configuration plus the output policy shared by every subcommand.
class Context {
public:
    explicit Context(const Globals& g) : g_(g) {
        params = g.params_path.empty() ? ModelParams::calibrated() : load_params(g.params_path);
        codec = g.codec_path.empty() ? LevelCodec{} : load_codec(g.codec_path);
        params.validate();
        codec.validate();
    }

    ModelParams params;
    LevelCodec codec;

    std::uint64_t seed() const { return g_.seed; }
    bool dry_run() const { return g_.dry_run; }

    /// Noise seed of an independent stream, or nullopt when noise is off.
    std::optional<std::uint64_t> noise(std::uint64_t stream) const {
        if (!g_.noise) return std::nullopt;
        return derive_seed(g_.seed, stream);
    }

    /// Relative artefact paths land in the output directory.
    std::string artefact(const std::string& path) const {
        if (g_.out_dir.empty() || fs::path(path).is_absolute()) return path;
        return (fs::path(g_.out_dir) / path).string();
    }

    void write(const std::string& path, const std::string& content) const {
        if (g_.dry_run) {
            std::cerr << "dry-run: not writing " << path << " (" << content.size() << " bytes)\n";
            return;
        }
        const auto parent = fs::path(path).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
        write_file_atomic(path, content);
    }

    /// Writes to the artefact path, or to stdout when `path` is empty.
    void emit(const std::string& path, const std::string& content) const {
        if (path.empty())
            std::cout << content;
        else
            write(artefact(path), content);
    }

    void save_array(const MolecularArray& a, const std::string& path) const { write(path, a.serialize()); }

private:
    Globals g_;
};

std::string upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

// ---------------------------------------------------------------------------

struct SweepArgs {
    double stop = 3.0;
    double step = 0.05;
    double dwell = 0.02;
    bool single = false;
    std::string out;
};

int run_sweep(const Context& ctx, const SweepArgs& a) {
    const auto wf = a.single ? make_sweep(0.0, a.stop, a.step, a.dwell, true) : make_dual_sweep(a.stop, a.step, a.dwell);
    const auto unit = spawn_unit(ctx.params, derive_seed(ctx.seed(), 0));
    const auto r = apply_waveform(unit, wf, ctx.params, ctx.noise(1));
    ctx.emit(a.out, r.trace.to_csv());
    const auto pw = peak_power(r.trace);
    std::cerr << "samples=" << r.trace.size() << " peak_power_W=" << format_double(pw.peak_W, 6)
              << " per_molecule_W=" << format_double(pw.per_molecule_W, 6);
    if (std::abs(a.stop) >= 0.5) std::cerr << " window_0.5V_S=" << format_double(memory_window(r.trace, 0.5), 6);
    if (const auto x = back_branch_crossing(r.trace)) std::cerr << " crossing_V=" << format_double(*x, 6);
    std::cerr << "\n";
    return 0;
}

struct CalibrateArgs {
    std::string targets;
    int max_evals = 400;
    std::vector<std::string> free;
    std::string out;
};

int run_calibrate(const Context& ctx, const CalibrateArgs& a) {
    const auto targets = load_targets(a.targets);
    CalibrationOptions opt;
    opt.optimizer.max_evals = a.max_evals;
    opt.free_parameters = a.free;
    const auto res = calibrate(targets, ctx.params, opt);
    std::cout << "name,observable,target,simulated,residual\n";
    for (const auto& r : res.report)
        std::cout << r.name << "," << r.observable << "," << format_double(r.target, 6) << ","
                  << format_double(r.simulated, 6) << "," << format_double(r.residual, 4) << "\n";
    std::cerr << "loss=" << format_double(res.loss, 6) << " evaluations=" << res.evaluations
              << " converged=" << (res.converged ? "yes" : "no") << "\n";
    if (!a.out.empty()) ctx.write(ctx.artefact(a.out), params_to_text(res.params));
    return 0;
}

struct LevelsArgs {
    bool staircase = false;
    std::optional<int> value;
    std::string out;
    std::string export_codec;
};

int run_levels(const Context& ctx, const LevelsArgs& a) {
    const auto& c = ctx.codec;
    if (!a.export_codec.empty()) ctx.write(ctx.artefact(a.export_codec), codec_to_text(c));
    if (a.value) {
        const auto unit = spawn_unit(ctx.params, derive_seed(ctx.seed(), 0));
        ProgramOptions opt;
        opt.noise_seed = ctx.noise(1);
        const auto rep = program_level(unit, *a.value, c, ctx.params, opt);
        std::cout << "value=" << *a.value << " bits=" << word_bits(*a.value)
                  << " voltage_V=" << format_double(rep.nominal_V, 6)
                  << " G_target_S=" << format_double(level_to_conductance(c, *a.value), 6)
                  << " attempts=" << rep.attempts.size() << " final_G_S=" << format_double(rep.final_G, 6)
                  << " read_level=" << decode_level(c, rep.final_G).level << "\n";
        for (const auto& at : rep.attempts)
            std::cout << "  attempt polarity=" << (at.polarity > 0 ? "+" : "-")
                      << " stop_V=" << format_double(at.stop_V, 6) << " G_after_S=" << format_double(at.G_after, 6)
                      << "\n";
        return 0;
    }
    if (a.staircase) {
        const auto unit = spawn_unit(ctx.params, derive_seed(ctx.seed(), 0));
        const auto rows = run_staircase(unit, c, ctx.params, ctx.noise(1));
        ctx.emit(a.out, staircase_csv(rows));
        std::vector<std::pair<double, double>> pts;
        for (const auto& r : rows) pts.emplace_back(r.level, r.G_measured);
        const auto m = staircase_metrics(pts);
        std::cerr << "states=" << rows.size() << " G_first_S=" << format_double(rows.front().G_measured, 6)
                  << " G_last_S=" << format_double(rows.back().G_measured, 6) << " r2=" << format_double(m.r2, 6)
                  << "\n";
        return 0;
    }
    if (!a.export_codec.empty() && a.out.empty()) return 0;
    std::string csv = "level,bits,voltage_V,G_target_S,verify_window_S\n";
    for (int v = 0; v < c.n_used; ++v)
        csv += std::to_string(v) + "," + word_bits(v) + "," + format_double(level_to_voltage(c, v), 6) + "," +
               format_double(level_to_conductance(c, v), 6) + "," + format_double(verify_window(c, v), 6) + "\n";
    ctx.emit(a.out, csv);
    return 0;
}

struct LogicArgs {
    std::string gate;
    int radix = 2;
    bool table = false;
    std::string expr;
    std::vector<std::string> vars;
    std::string spec;
    std::string out;
};

int run_logic(const Context& ctx, const LogicArgs& a) {
    LogicOptions opt;
    opt.noise_seed = ctx.noise(1);
    if (!a.expr.empty()) {
        const auto e = parse_cascade(a.expr);
        std::map<std::string, int> vars;
        for (const auto& kv : a.vars) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("--var expects name=value, got '" + kv + "'");
            vars[trim(kv.substr(0, eq))] = static_cast<int>(parse_double(trim(kv.substr(eq + 1))));
        }
        const int ref = cascade_reference(*e, a.radix, vars);
        auto pool = UnitPool::pristine(static_cast<std::size_t>(e->gate_count()));
        const int got = cascade_eval(*e, a.radix, pool, ctx.codec, ctx.params, vars, opt);
        std::cout << "expr=" << e->to_string() << " radix=" << a.radix << " result=" << got << " reference=" << ref
                  << " gates=" << e->gate_count() << " depth=" << e->depth() << "\n";
        if (got != ref) throw domain_error("device cascade disagrees with the arithmetic reference");
        return 0;
    }
    if (!a.spec.empty()) {
        const auto spec = load_gate_spec(a.spec);
        spec.validate(ctx.codec);
        std::vector<TruthRow> rows;
        std::uint64_t k = 0;
        for (int p = 0; p < 2; ++p)
            for (int q = 0; q < 2; ++q) {
                UnitState u;
                auto o = opt;
                if (opt.noise_seed) o.noise_seed = derive_seed(*opt.noise_seed, k++);
                prepare_gate(spec, u, ctx.codec, ctx.params, o);
                const auto r = boolean_gate(spec, u, p, q, ctx.codec, ctx.params, o);
                rows.push_back({p, q, r.G, r.output});
            }
        ctx.emit(a.out, truth_table_csv(rows));
        return 0;
    }
    if (a.gate.empty()) throw std::invalid_argument("logic needs --gate, --spec or --expr");
    ctx.emit(a.out, truth_table_csv(truth_table(upper(a.gate), a.radix, ctx.codec, ctx.params, opt)));
    return 0;
}

struct ArrayArgs {
    int rows = 0;
    int cols = 0;
    int channels = 3;
    std::string array;
    std::optional<int> row;
    std::optional<int> col;
};

int run_array_alloc(const Context& ctx, const ArrayArgs& a) {
    ArrayGeometry g{a.rows, a.cols, a.channels};
    const auto arr = MolecularArray::allocate(g, ctx.params, ctx.codec, ctx.seed());
    ctx.save_array(arr, a.array);
    std::cout << "allocated " << a.rows << "x" << a.cols << "x" << a.channels << " units=" << arr.size()
              << " master_seed=" << hex64(ctx.seed()) << "\n";
    return 0;
}

int run_array_inspect(const Context& ctx, const ArrayArgs& a) {
    const auto arr = MolecularArray::load(a.array, ctx.params, ctx.codec);
    const auto& g = arr.geometry();
    std::size_t written = 0;
    for (std::size_t i = 0; i < arr.size(); ++i)
        if (arr.written_level(arr.address(i))) ++written;
    std::cout << "geometry=" << g.rows << "x" << g.cols << "x" << g.channels << " units=" << arr.size()
              << " written=" << written << " master_seed=" << hex64(arr.master_seed()) << "\n";
    if (a.row || a.col) {
        if (!a.row || !a.col) throw std::invalid_argument("inspect needs both --row and --col");
        for (int ch = 0; ch < g.channels; ++ch) {
            const Address at{*a.row, *a.col, ch};
            const auto w = arr.read_word(at, ctx.noise(arr.index(at)));
            std::cout << to_string(at) << " value=" << w.value << " bits=" << word_bits(w.value)
                      << " G_S=" << format_double(w.G, 6) << (w.unwritten ? " unwritten" : "") << "\n";
        }
    }
    return 0;
}

int run_array_capacity(const ArrayArgs& a) {
    ArrayGeometry g{a.rows, a.cols, 3};
    g.validate();
    const auto r = capacity_report(g);
    std::cout << "molecular_units=" << r.molecular_units << " binary_units=" << r.binary_units
              << " ratio=" << format_double(r.ratio, 6) << "\n";
    return 0;
}

struct CryptArgs {
    std::string image;
    std::string array;
    std::optional<std::uint64_t> key_seed;
    std::string key;
    std::string key_out;
    std::string cipher_out;
    std::string out;
};

MolecularArray store_image(const Context& ctx, const RgbImage& img, std::optional<MolecularArray> existing) {
    ArrayGeometry g{img.height, img.width, 3};
    auto arr = existing ? std::move(*existing) : MolecularArray::allocate(g, ctx.params, ctx.codec, ctx.seed());
    if (!(arr.geometry() == g)) throw std::invalid_argument("image size does not match the array geometry");
    auto planes = decompose_rgb(img);
    ChannelSet words;
    for (int c = 0; c < 3; ++c) words[c] = quantize_channel(planes[c]);
    const auto rep = store_plaintext(arr, words, ctx.noise(1));
    std::cerr << "stored words=" << rep.writes << " program_attempts=" << rep.program_attempts << "\n";
    return arr;
}

int run_store(const Context& ctx, const CryptArgs& a) {
    const auto img = load_ppm(a.image);
    std::optional<MolecularArray> existing;
    if (fs::exists(a.array)) existing = MolecularArray::load(a.array, ctx.params, ctx.codec);
    const auto arr = store_image(ctx, img, std::move(existing));
    ctx.save_array(arr, a.array);
    return 0;
}

KeyMatrix resolve_key(const CryptArgs& a, int width, int height) {
    if (a.key_seed && !a.key.empty()) throw std::invalid_argument("--key-seed and --key are mutually exclusive");
    if (a.key_seed) return gen_key(*a.key_seed, width, height);
    if (a.key.empty()) throw std::invalid_argument("a key is required (--key-seed or --key)");
    auto k = load_key(a.key);
    if (k.width() != width || k.height() != height) throw std::invalid_argument("key size does not match the array");
    return k;
}

void report(const char* what, const CryptReport& r) {
    std::cout << what << " words=" << r.words << " xor_evaluations=" << r.xor_evaluations
              << " reprogrammed=" << r.reprogrammed << " negative_writes=" << r.negative_writes
              << " device_mismatches=" << r.device_mismatches << "\n";
}

int run_encrypt(const Context& ctx, const CryptArgs& a) {
    auto arr = a.image.empty() ? MolecularArray::load(a.array, ctx.params, ctx.codec)
                               : store_image(ctx, load_ppm(a.image), std::nullopt);
    const auto& g = arr.geometry();
    const auto key = resolve_key(a, g.cols, g.rows);
    UnitState scratch;
    const auto rep = encrypt_in_situ(arr, key, scratch, {ctx.noise(2)});
    report("encrypted", rep);
    ctx.save_array(arr, a.array);
    if (!a.key_out.empty()) ctx.write(ctx.artefact(a.key_out), format_key(key));
    if (!a.cipher_out.empty()) {
        const auto r = render_cipher_image(arr, ctx.noise(3));
        ctx.write(ctx.artefact(a.cipher_out), format_ppm(r.image));
        if (!r.flagged.empty()) std::cerr << "render flagged " << r.flagged.size() << " units\n";
    }
    return rep.device_mismatches == 0 ? 0 : 1;
}

int run_decrypt(const Context& ctx, const CryptArgs& a) {
    auto arr = MolecularArray::load(a.array, ctx.params, ctx.codec);
    const auto& g = arr.geometry();
    const auto key = resolve_key(a, g.cols, g.rows);
    UnitState scratch;
    const auto rep = decrypt_in_situ(arr, key, scratch, {ctx.noise(4)});
    report("decrypted", rep);
    ctx.save_array(arr, a.array);
    if (!a.out.empty()) {
        const auto words = read_words(arr, ctx.noise(5));
        const auto img = reassemble(dequantize_channel(words[0]), dequantize_channel(words[1]), dequantize_channel(words[2]));
        ctx.write(ctx.artefact(a.out), format_ppm(img));
    }
    return rep.device_mismatches == 0 ? 0 : 1;
}

int run_render(const Context& ctx, const CryptArgs& a) {
    const auto arr = MolecularArray::load(a.array, ctx.params, ctx.codec);
    const auto r = render_cipher_image(arr, ctx.noise(3));
    ctx.write(ctx.artefact(a.out), format_ppm(r.image));
    std::cout << "rendered " << r.image.width << "x" << r.image.height << " flagged=" << r.flagged.size() << "\n";
    return r.flagged.empty() ? 0 : 1;
}

struct StatsArgs {
    std::vector<double> stops{0.5, 5.5, 10.0};
    double at = 0.5;
    double stop = 3.0;
    int sweeps = 3;
    int devices = 5;
    double duration = 1e4;
    double every = 100.0;
    std::string out;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Molecular hard-disk simulator"};
    app.require_subcommand(1);
    Globals g;
    if (const char* env = std::getenv("MHDD_OUT_DIR")) g.out_dir = env;
    app.add_option("--params", g.params_path, "model parameter file (key=value)")->check(CLI::ExistingFile);
    app.add_option("--codec", g.codec_path, "level codec file (key=value)")->check(CLI::ExistingFile);
    app.add_option("--out-dir", g.out_dir, "directory for relative output paths (default $MHDD_OUT_DIR)");
    app.add_option("--seed", g.seed, "master seed for devices and noise");
    app.add_flag("--noise", g.noise, "enable read noise");
    app.add_flag("--dry-run", g.dry_run, "perform no file writes");
    app.fallthrough();

    SweepArgs sweep;
    auto* sw = app.add_subcommand("sweep", "dual (or single) dc sweep of one unit; CSV trace");
    sw->add_option("--stop", sweep.stop, "stop voltage, V");
    sw->add_option("--step", sweep.step, "voltage step, V");
    sw->add_option("--dwell", sweep.dwell, "dwell per sample, s");
    sw->add_flag("--single", sweep.single, "0 -> stop -> 0 only");
    sw->add_option("--out", sweep.out, "CSV output (default stdout)");

    CalibrateArgs cal;
    auto* ca = app.add_subcommand("calibrate", "fit model parameters to a target table");
    ca->add_option("--targets", cal.targets, "targets CSV")->required()->check(CLI::ExistingFile);
    ca->add_option("--max-evals", cal.max_evals, "objective evaluation cap");
    ca->add_option("--free", cal.free, "parameters to vary");
    ca->add_option("--out", cal.out, "fitted parameter file");

    LevelsArgs lv;
    auto* le = app.add_subcommand("levels", "codec table, single-level write, or full staircase");
    le->add_flag("--staircase", lv.staircase, "program and read every staircase state");
    le->add_option("--value", lv.value, "program one 6-bit value on a fresh unit");
    le->add_option("--out", lv.out, "CSV output (default stdout)");
    le->add_option("--export-codec", lv.export_codec, "write the active codec");

    LogicArgs lg;
    auto* lo = app.add_subcommand("logic", "truth tables and cascade evaluation");
    lo->add_option("--gate", lg.gate, "XOR, AND, OR, NOT, NAND, NOR, IMP, MAX, MIN, THRESHOLD");
    lo->add_option("--radix", lg.radix, "logic radix (2, 3 or 4)");
    lo->add_flag("--table", lg.table, "print the truth table (default for --gate)");
    lo->add_option("--expr", lg.expr, "cascade expression, e.g. \"(max (min 2 p) q)\"");
    lo->add_option("--var", lg.vars, "variable binding name=value");
    lo->add_option("--spec", lg.spec, "gate spec file")->check(CLI::ExistingFile);
    lo->add_option("--out", lg.out, "CSV output (default stdout)");

    ArrayArgs ar;
    auto* arr = app.add_subcommand("array", "allocate, inspect and size arrays");
    arr->require_subcommand(1);
    auto* alloc = arr->add_subcommand("alloc", "allocate a pristine array file");
    alloc->add_option("--rows", ar.rows)->required();
    alloc->add_option("--cols", ar.cols)->required();
    alloc->add_option("--channels", ar.channels);
    alloc->add_option("--array", ar.array, "array file to create")->required();
    auto* insp = arr->add_subcommand("inspect", "summarize an array file");
    insp->add_option("--array", ar.array)->required()->check(CLI::ExistingFile);
    insp->add_option("--row", ar.row);
    insp->add_option("--col", ar.col);
    auto* cap = arr->add_subcommand("capacity", "molecular vs binary unit counts");
    cap->add_option("--rows", ar.rows)->required();
    cap->add_option("--cols", ar.cols)->required();

    CryptArgs cr;
    auto* st = app.add_subcommand("store", "quantize a PPM image and store it");
    st->add_option("--image", cr.image)->required()->check(CLI::ExistingFile);
    st->add_option("--array", cr.array, "array file (created when missing)")->required();

    auto add_key = [&](CLI::App* s) {
        s->add_option("--key-seed", cr.key_seed, "generate the key from this seed");
        s->add_option("--key", cr.key, "key file")->check(CLI::ExistingFile);
    };
    auto* en = app.add_subcommand("encrypt", "in-situ XOR encryption of a stored image");
    en->add_option("--image", cr.image, "store this image into a fresh array first")->check(CLI::ExistingFile);
    en->add_option("--array", cr.array)->required();
    add_key(en);
    en->add_option("--key-out", cr.key_out, "write the key file");
    en->add_option("--cipher-out", cr.cipher_out, "write the cipher image (PPM)");
    auto* de = app.add_subcommand("decrypt", "in-situ XOR decryption");
    de->add_option("--array", cr.array)->required()->check(CLI::ExistingFile);
    add_key(de);
    de->add_option("--out", cr.out, "write the recovered image (PPM)");
    auto* re = app.add_subcommand("render", "render stored words as an image");
    re->add_option("--array", cr.array)->required()->check(CLI::ExistingFile);
    re->add_option("--out", cr.out, "PPM output")->required();

    StatsArgs sa;
    auto* stats = app.add_subcommand("stats", "windows, power, uniformity and retention");
    stats->require_subcommand(1);
    auto* s_win = stats->add_subcommand("windows", "memory window per stop voltage");
    s_win->add_option("--stops", sa.stops, "stop voltages")->delimiter(',');
    s_win->add_option("--at", sa.at, "read voltage of the window");
    auto* s_pow = stats->add_subcommand("power", "peak power of a dual sweep");
    s_pow->add_option("--stop", sa.stop);
    auto* s_uni = stats->add_subcommand("uniformity", "cycle-to-cycle and device-to-device uniformity");
    s_uni->add_option("--sweeps", sa.sweeps);
    s_uni->add_option("--devices", sa.devices);
    auto* s_ret = stats->add_subcommand("retention", "drift of the 1-10 V states");
    s_ret->add_option("--duration", sa.duration, "simulated seconds");
    s_ret->add_option("--every", sa.every, "sampling interval, s");
    s_ret->add_option("--out", sa.out, "CSV of the traces");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code == 0) return 0;
        std::cerr << app.help();
        return 2;
    }

    try {
        const Context ctx(g);
        if (*sw) return run_sweep(ctx, sweep);
        if (*ca) return run_calibrate(ctx, cal);
        if (*le) return run_levels(ctx, lv);
        if (*lo) return run_logic(ctx, lg);
        if (*alloc) return run_array_alloc(ctx, ar);
        if (*insp) return run_array_inspect(ctx, ar);
        if (*cap) return run_array_capacity(ar);
        if (*st) return run_store(ctx, cr);
        if (*en) return run_encrypt(ctx, cr);
        if (*de) return run_decrypt(ctx, cr);
        if (*re) return run_render(ctx, cr);
        if (*s_win) {
            std::cout << "stop_V,window_S\n";
            for (double s : sa.stops)
                std::cout << format_double(s, 6) << ","
                          << format_double(memory_window(apply_waveform(UnitState{}, make_dual_sweep(s, 0.1, 0.02),
                                                                        ctx.params).trace, sa.at), 6)
                          << "\n";
            return 0;
        }
        if (*s_pow) {
            const auto r = apply_waveform(UnitState{}, make_dual_sweep(sa.stop, 0.05, 0.02), ctx.params, ctx.noise(1));
            const auto p = peak_power(r.trace);
            std::cout << "peak_W=" << format_double(p.peak_W, 6) << " per_molecule_W=" << format_double(p.per_molecule_W, 6)
                      << "\n";
            return 0;
        }
        if (*s_uni) {
            const auto stops = study_stop_voltages();
            std::cout << "cycle_to_cycle_pct=" << format_double(cycle_uniformity(ctx.params, stops, sa.sweeps, ctx.seed()), 6)
                      << " device_to_device_pct="
                      << format_double(device_uniformity(ctx.params, stops, sa.devices, ctx.seed()), 6) << "\n";
            return 0;
        }
        if (*s_ret) {
            const auto r = retention_study(ctx.params, study_stop_voltages(), sa.duration, sa.every, ctx.seed());
            if (!sa.out.empty()) {
                std::string csv = "t_s";
                for (double s : r.stops) csv += ",G_" + format_double(s, 3) + "V_S";
                csv += "\n";
                for (std::size_t i = 0; i < r.traces.front().size(); ++i) {
                    csv += format_double(static_cast<double>(i) * sa.every, 10);
                    for (const auto& t : r.traces) csv += "," + format_double(t[i], 8);
                    csv += "\n";
                }
                ctx.write(ctx.artefact(sa.out), csv);
            }
            std::cout << "max_fluctuation_pct=" << format_double(100.0 * r.max_fluctuation, 6)
                      << " distinguishable=" << (r.distinguishable ? "yes" : "no") << "\n";
            return 0;
        }
        std::cerr << app.help();
        return 2;
    } catch (const domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
