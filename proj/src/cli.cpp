#include "depkit/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "depkit/coverage.hpp"
#include "depkit/jsonutil.hpp"
#include "depkit/monitor.hpp"
#include "depkit/network.hpp"
#include "depkit/perturb.hpp"
#include "depkit/report.hpp"
#include "depkit/verify.hpp"

namespace depkit {

using nlohmann::json;

namespace {

bool g_verbose = false;

void vlog(const std::string& line) {
    if (g_verbose) std::cerr << "depkit: " << line << "\n";
}

struct Shape {
    int h = 1, w = 1, c = 1;
};

Shape parse_shape(const std::string& spec) {
    Shape s;
    char x1 = 0, x2 = 0;
    std::istringstream in(spec);
    if (!(in >> s.h >> x1 >> s.w >> x2 >> s.c) || x1 != 'x' || x2 != 'x' || s.h < 1 || s.w < 1 ||
        s.c < 1)
        throw BadParameters("shape must look like HxWxC, e.g. 8x8x1");
    return s;
}

Shape infer_shape(std::size_t n) {
    int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    if (s >= 1 && static_cast<std::size_t>(s) * s == n) return Shape{s, s, 1};
    return Shape{1, static_cast<int>(n), 1};
}

Vec load_input_vector(const std::filesystem::path& path) {
    json j = read_json_file(path);
    require_format(j, "input " + path.string());
    try {
        return j.at("x").get<Vec>();
    } catch (const json::exception& e) {
        throw MalformedInput("input " + path.string() + ": " + e.what());
    }
}

/// Print the report (stdout) or write it to `out` and print a summary line.
void emit_report(const AnalysisReport& report, const std::string& out,
                 const std::string& summary) {
    for (const auto& [path, hash] : report.inputs) vlog("input " + path + " (" + hash + ")");
    if (out.empty()) {
        std::cout << report_json(report).dump(2) << "\n";
    } else {
        write_report(out, report);
        std::cout << summary << " -> " << out << "\n";
    }
}

std::string fraction(long long num, long long den) {
    return std::to_string(num) + "/" + std::to_string(den);
}

int cmd_coverage_compute(const std::string& catalog_path, int k, bool constrained,
                         std::optional<double> min_coverage, const std::string& out) {
    Catalog cat = load_catalog(catalog_path);
    CoverageOptions opts;
    opts.constrained_denominator = constrained;
    CoverageLedger ledger = projection_coverage(cat.space, cat.items, k, cat.constraints, opts);

    long long num = static_cast<long long>(ledger.covered.size());
    AnalysisReport report;
    report.subcommand = "coverage compute";
    report.gsn_tag = "Sn1";
    report.inputs[catalog_path] = file_fingerprint(catalog_path);
    report.payload = {{"k", k},
                      {"items", cat.items.size()},
                      {"numerator", num},
                      {"denominator", ledger.denominator},
                      {"fraction", fraction(num, ledger.denominator)},
                      {"ratio", ledger.ratio()},
                      {"constrained_denominator", constrained}};
    bool gate_failed = false;
    if (min_coverage) {
        gate_failed = ledger.ratio() < *min_coverage;
        report.payload["gate"] = {{"min_coverage", *min_coverage}, {"passed", !gate_failed}};
    }
    std::ostringstream line;
    line << k << "-projection coverage: " << fraction(num, ledger.denominator) << " = "
         << ledger.ratio();
    emit_report(report, out, line.str());
    if (out.empty()) std::cout << line.str() << "\n";
    return gate_failed ? 1 : 0;
}

int cmd_coverage_propose(const std::string& catalog_path, int k, int count, bool greedy,
                         const std::string& out) {
    Catalog cat = load_catalog(catalog_path);
    CoverageLedger ledger = projection_coverage(cat.space, cat.items, k, cat.constraints);
    std::vector<Proposal> proposals =
        greedy ? propose_next_greedy(cat.space, ledger, cat.constraints, count)
               : propose_next(cat.space, ledger, cat.constraints, count);

    AnalysisReport report;
    report.subcommand = "coverage propose";
    report.gsn_tag = "Sn2";
    report.inputs[catalog_path] = file_fingerprint(catalog_path);
    json plist = json::array();
    for (const Proposal& p : proposals)
        plist.push_back({{"assignment", item_value_names(cat.space, p.item)},
                         {"gain", p.gain},
                         {"gain_fraction", fraction(p.gain, ledger.denominator)}});
    report.payload = {{"k", k},
                      {"count", count},
                      {"greedy", greedy},
                      {"denominator", ledger.denominator},
                      {"proposals", std::move(plist)}};
    std::ostringstream line;
    line << "best proposal gain " << (proposals.empty() ? 0 : proposals.front().gain) << "/"
         << ledger.denominator;
    emit_report(report, out, line.str());
    return 0;
}

json bounds_json(const std::vector<LayerBounds>& layers) {
    json arr = json::array();
    for (const LayerBounds& lb : layers)
        arr.push_back({{"lower", lb.lower}, {"upper", lb.upper}});
    return arr;
}

int cmd_verify(const std::string& problem_path, const std::string& domain, int budget,
               std::uint64_t seed, const std::string& out) {
    VerificationProblem problem = load_problem(problem_path);
    VerifyOptions opts;
    if (domain == "interval")
        opts.domain = Domain::Interval;
    else if (domain == "octagon")
        opts.domain = Domain::Octagon;
    else
        throw BadParameters("--domain must be interval or octagon");
    opts.budget = budget;
    opts.seed = seed;
    Verdict verdict = verify(problem, opts);

    AnalysisReport report;
    report.subcommand = "verify";
    report.gsn_tag = "Sn9";
    report.inputs[problem_path] = file_fingerprint(problem_path);
    const char* kind = verdict.kind == VerdictKind::Proved          ? "proved"
                       : verdict.kind == VerdictKind::Counterexample ? "counterexample"
                                                                     : "unknown";
    report.payload = {{"domain", domain},
                      {"budget", budget},
                      {"verdict", kind},
                      {"note", verdict.note},
                      {"splits_used", verdict.splits_used},
                      {"unknown_leaves", verdict.unknown_leaves},
                      {"layer_bounds", bounds_json(verdict.layer_bounds)}};
    if (verdict.kind == VerdictKind::Counterexample)
        report.payload["witness"] = {{"input", verdict.witness_input},
                                     {"output", verdict.witness_output}};
    emit_report(report, out, std::string("verdict: ") + kind);
    return verdict.kind == VerdictKind::Counterexample ? 1 : 0;
}

int cmd_monitor_build(const std::string& model_path, const std::string& data_path, int layer,
                      int gamma, const std::string& monitor_out, const std::string& report_out) {
    Network net = load_network(model_path);
    Dataset ds = load_dataset(data_path);
    Monitor mon =
        build_monitor(net, ds, layer, gamma, model_path, file_fingerprint(model_path));
    mon.save(monitor_out);

    AnalysisReport report;
    report.subcommand = "monitor build";
    report.gsn_tag = "Sn10";
    report.inputs[model_path] = file_fingerprint(model_path);
    report.inputs[data_path] = file_fingerprint(data_path);
    json classes = json::array();
    for (std::size_t c = 0; c < mon.class_count(); ++c) {
        const auto& st = mon.class_stats()[c];
        classes.push_back({{"class", c},
                           {"examples", st.examples},
                           {"distinct_patterns", st.distinct_patterns},
                           {"relaxed_patterns", mon.relaxed_satcount(c)}});
    }
    report.payload = {{"layer_index", mon.layer_index()},
                      {"gamma", gamma},
                      {"width", mon.width()},
                      {"monitor_path", monitor_out},
                      {"classes", std::move(classes)}};
    std::ostringstream line;
    line << "monitor over layer " << mon.layer_index() << " (width " << mon.width()
         << ", gamma " << gamma << ")";
    emit_report(report, report_out, line.str());
    if (report_out.empty())
        std::cout << "monitor written to " << monitor_out << "\n";
    return 0;
}

int cmd_monitor_check(const std::string& monitor_path, const std::string& input_path,
                      const std::string& out) {
    Monitor mon = Monitor::load(monitor_path);
    std::filesystem::path model = mon.model_path();
    if (model.is_relative())
        model = std::filesystem::path(monitor_path).parent_path() / model;
    if (file_fingerprint(model) != mon.model_hash())
        throw MalformedInput("model file " + model.string() +
                             " does not match the hash recorded in the monitor");
    Network net = load_network(model);
    Vec x = load_input_vector(input_path);
    MonitorVerdict verdict = mon.check(net, x);

    AnalysisReport report;
    report.subcommand = "monitor check";
    report.gsn_tag = "Sn10";
    report.inputs[monitor_path] = file_fingerprint(monitor_path);
    report.inputs[input_path] = file_fingerprint(input_path);
    report.payload = {{"verdict", verdict.supported ? "supported" : "warning"},
                      {"predicted_class", verdict.predicted_class},
                      {"pattern", pattern_to_string(verdict.pattern)},
                      {"layer_index", mon.layer_index()},
                      {"gamma", mon.gamma()}};
    emit_report(report, out,
                std::string(verdict.supported ? "supported" : "WARNING") + " (class " +
                    std::to_string(verdict.predicted_class) + ")");
    return verdict.supported ? 0 : 1;
}

struct PerturbParams {
    double sigma = 0.1;
    double haze_alpha = 0.3;
    double fog_alpha = 0.5;
    int fog_radius = 2;
    double snow_density = 0.05;
    double snow_brightness = 1.0;
    double sp_density = 0.05;
    int blur_radius = 2;
    double epsilon = 8.0 / 255.0;
};

PerturbationKind kind_with_params(const std::string& name, const PerturbParams& p) {
    if (name == "gaussian") return GaussianNoise{p.sigma};
    if (name == "haze") return Haze{p.haze_alpha};
    if (name == "fog") return Fog{p.fog_alpha, p.fog_radius};
    if (name == "snow") return Snow{p.snow_density, p.snow_brightness};
    if (name == "saltpepper") return SaltPepper{p.sp_density};
    if (name == "blur") return Blur{p.blur_radius};
    if (name == "fgsm") return Fgsm{p.epsilon};
    throw BadParameters("unknown perturbation kind \"" + name + "\"");
}

json kind_params_json(const PerturbationKind& kind) {
    return std::visit(
        [](const auto& k) -> json {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, GaussianNoise>) return {{"sigma", k.sigma}};
            if constexpr (std::is_same_v<T, Haze>) return {{"alpha", k.alpha}};
            if constexpr (std::is_same_v<T, Fog>)
                return {{"alpha", k.alpha}, {"blur_radius", k.blur_radius}};
            if constexpr (std::is_same_v<T, Snow>)
                return {{"density", k.density}, {"brightness", k.brightness}};
            if constexpr (std::is_same_v<T, SaltPepper>) return {{"density", k.density}};
            if constexpr (std::is_same_v<T, Blur>) return {{"radius", k.radius}};
            return {{"epsilon", std::get<Fgsm>(PerturbationKind{k}).epsilon}};
        },
        kind);
}

int cmd_perturb(const std::string& model_path, const std::string& data_path,
                const std::string& kinds_csv, std::uint64_t seed, int jobs,
                const std::string& shape_spec, const PerturbParams& params,
                const std::string& out) {
    Network net = load_network(model_path);
    Dataset ds = load_dataset(data_path);
    if (ds.items.empty()) throw EmptyDataset("perturb: dataset has no records");

    Shape shape = shape_spec.empty() ? infer_shape(net.input_dim) : parse_shape(shape_spec);
    if (static_cast<std::size_t>(shape.h) * shape.w * shape.c != net.input_dim)
        throw BadParameters("shape product must equal the model input dimension");

    std::vector<std::string> names;
    std::stringstream ss(kinds_csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) names.push_back(tok);
    if (names.empty()) throw BadParameters("--kinds must name at least one perturbation");
    std::vector<PerturbationKind> kinds;
    for (const std::string& n : names) kinds.push_back(kind_with_params(n, params));

    std::vector<std::pair<ImageInput, int>> data;
    data.reserve(ds.items.size());
    for (const DataItem& item : ds.items)
        data.emplace_back(ImageInput(item.x, shape.h, shape.w, shape.c), item.label);

    PerturbationReport rep = perturbation_loss(net, data, kinds, seed, jobs);

    AnalysisReport report;
    report.subcommand = "perturb";
    report.gsn_tag = "Sn8";
    report.inputs[model_path] = file_fingerprint(model_path);
    report.inputs[data_path] = file_fingerprint(data_path);
    json karr = json::array();
    for (const KindReport& kr : rep.kinds) {
        json pe = json::array();
        for (const ExampleLoss& e : kr.per_example)
            pe.push_back({{"index", e.index}, {"loss", e.loss}, {"raw_drop", e.raw_drop}});
        karr.push_back({{"kind", kind_name(kr.kind)},
                        {"params", kind_params_json(kr.kind)},
                        {"average_loss", kr.average_loss},
                        {"max_loss", kr.max_loss},
                        {"per_example", std::move(pe)}});
    }
    report.payload = {{"seed", seed},
                      {"examples", ds.items.size()},
                      {"shape", std::to_string(shape.h) + "x" + std::to_string(shape.w) + "x" +
                                    std::to_string(shape.c)},
                      {"kinds", std::move(karr)}};
    std::ostringstream line;
    line << "perturbation loss over " << ds.items.size() << " examples, " << kinds.size()
         << " kinds";
    emit_report(report, out, line.str());
    return 0;
}

int cmd_occlusion(const std::string& model_path, const std::string& input_path, int label_flag,
                  int patch, int stride, double value, const std::string& pgm,
                  const std::string& shape_spec, const std::string& out) {
    Network net = load_network(model_path);
    Vec x = load_input_vector(input_path);
    Shape shape = shape_spec.empty() ? infer_shape(x.size()) : parse_shape(shape_spec);
    ImageInput img(x, shape.h, shape.w, shape.c);

    std::size_t label;
    if (label_flag >= 0) {
        label = static_cast<std::size_t>(label_flag);
    } else {
        Vec logits = forward(net, img.values).logits;
        label = 0;
        for (std::size_t i = 1; i < logits.size(); ++i)
            if (logits[i] > logits[label]) label = i;
    }
    if (patch <= 0) patch = std::max(1, std::min(shape.h, shape.w) / 4);
    if (stride <= 0) stride = std::max(1, patch / 2);

    OcclusionResult res = occlusion_sensitivity(net, img, label, patch, stride, value);
    if (!pgm.empty()) write_text_atomic(pgm, heatmap_to_pgm(res.heatmap));

    AnalysisReport report;
    report.subcommand = "occlusion";
    report.gsn_tag = "Sn6";
    report.inputs[model_path] = file_fingerprint(model_path);
    report.inputs[input_path] = file_fingerprint(input_path);
    report.payload = {{"label", label},
                      {"patch", patch},
                      {"stride", stride},
                      {"patch_value", value},
                      {"rows", res.heatmap.size()},
                      {"cols", res.heatmap.empty() ? 0 : res.heatmap[0].size()},
                      {"heatmap", res.heatmap},
                      {"max_drop", res.max_drop}};
    std::ostringstream line;
    line << "occlusion max drop " << res.max_drop;
    emit_report(report, out, line.str());
    return 0;
}

} // namespace

int run_cli(std::vector<std::string> args) {
    CLI::App app{"depkit - dependability toolkit for small feedforward networks"};
    app.require_subcommand(1);
    g_verbose = false;
    app.add_flag("-v,--verbose", g_verbose, "progress notes on stderr")->configurable(false);

    // coverage
    auto* coverage = app.add_subcommand("coverage", "scenario k-projection coverage");
    coverage->require_subcommand(1);

    std::string cov_catalog, cov_out;
    int cov_k = 2;
    bool cov_constrained = false;
    double cov_min = -1.0;
    auto* compute = coverage->add_subcommand("compute", "coverage of the collected items");
    compute->add_option("--catalog", cov_catalog, "catalog JSON file")->required();
    compute->add_option("--k", cov_k, "projection order (default 2)");
    compute->add_flag("--constrained-denominator", cov_constrained,
                      "exclude k-tuples no feasible assignment can reach");
    compute->add_option("--min-coverage", cov_min, "CI gate: fail (exit 1) below this ratio");
    compute->add_option("--out", cov_out, "report path");

    std::string prop_catalog, prop_out;
    int prop_k = 2, prop_count = 1;
    bool prop_greedy = false;
    auto* propose = coverage->add_subcommand("propose", "next data points maximizing coverage");
    propose->add_option("--catalog", prop_catalog, "catalog JSON file")->required();
    propose->add_option("--k", prop_k, "projection order (default 2)");
    propose->add_option("--count", prop_count, "number of proposals");
    propose->add_flag("--greedy", prop_greedy, "greedy search (no optimality promise)");
    propose->add_option("--out", prop_out, "report path");

    // verify
    std::string ver_problem, ver_domain = "interval", ver_out;
    int ver_budget = 256;
    std::uint64_t ver_seed = 0;
    auto* ver = app.add_subcommand("verify", "formal verification of a risk property");
    ver->add_option("--problem", ver_problem, "problem JSON file")->required();
    ver->add_option("--domain", ver_domain, "interval|octagon (default interval)");
    ver->add_option("--budget", ver_budget, "max ReLU splits (default 256)");
    ver->add_option("--seed", ver_seed, "falsification seed");
    ver->add_option("--out", ver_out, "report path");

    // monitor
    auto* monitor = app.add_subcommand("monitor", "BDD activation-pattern monitoring");
    monitor->require_subcommand(1);

    std::string mb_model, mb_data, mb_out, mb_report;
    int mb_layer = -1, mb_gamma = 0;
    auto* mbuild = monitor->add_subcommand("build", "record training patterns per class");
    mbuild->add_option("--model", mb_model, "model JSON file")->required();
    mbuild->add_option("--data", mb_data, "training dataset (JSON lines)")->required();
    mbuild->add_option("--layer", mb_layer, "monitored ReLU layer; -1 = last ReLU");
    mbuild->add_option("--gamma", mb_gamma, "Hamming relaxation radius (default 0)");
    mbuild->add_option("--out", mb_out, "monitor output file")->required();
    mbuild->add_option("--report", mb_report, "report path");

    std::string mc_monitor, mc_input, mc_out;
    auto* mcheck = monitor->add_subcommand("check", "check one input against the monitor");
    mcheck->add_option("--monitor", mc_monitor, "monitor file")->required();
    mcheck->add_option("--input", mc_input, "input vector JSON file")->required();
    mcheck->add_option("--out", mc_out, "report path");

    // perturb
    std::string pt_model, pt_data, pt_out, pt_shape;
    std::string pt_kinds = "gaussian,haze,fog,snow,saltpepper,blur,fgsm";
    std::uint64_t pt_seed = 0;
    int pt_jobs = 1;
    PerturbParams pt_params;
    auto* pt = app.add_subcommand("perturb", "perturbation loss metric");
    pt->add_option("--model", pt_model, "model JSON file")->required();
    pt->add_option("--data", pt_data, "dataset (JSON lines)")->required();
    pt->add_option("--kinds", pt_kinds, "comma list of perturbations (default all seven)");
    pt->add_option("--seed", pt_seed, "perturbation seed");
    pt->add_option("--jobs", pt_jobs, "data-parallel width");
    pt->add_option("--shape", pt_shape, "image shape HxWxC (default inferred)");
    pt->add_option("--sigma", pt_params.sigma, "gaussian sigma");
    pt->add_option("--haze-alpha", pt_params.haze_alpha, "haze blend factor");
    pt->add_option("--fog-alpha", pt_params.fog_alpha, "fog blend factor");
    pt->add_option("--fog-radius", pt_params.fog_radius, "fog blur radius");
    pt->add_option("--snow-density", pt_params.snow_density, "snow pixel fraction");
    pt->add_option("--snow-brightness", pt_params.snow_brightness, "snow pixel value");
    pt->add_option("--sp-density", pt_params.sp_density, "salt-and-pepper pixel fraction");
    pt->add_option("--blur-radius", pt_params.blur_radius, "box blur radius");
    pt->add_option("--epsilon", pt_params.epsilon, "FGSM epsilon");
    pt->add_option("--out", pt_out, "report path");

    // occlusion
    std::string oc_model, oc_input, oc_out, oc_pgm, oc_shape;
    int oc_label = -1, oc_patch = 0, oc_stride = 0;
    double oc_value = 0.5;
    auto* oc = app.add_subcommand("occlusion", "occlusion sensitivity heatmap");
    oc->add_option("--model", oc_model, "model JSON file")->required();
    oc->add_option("--input", oc_input, "input vector JSON file")->required();
    oc->add_option("--label", oc_label, "class label (default: predicted)");
    oc->add_option("--patch", oc_patch, "patch size (default min dim / 4)");
    oc->add_option("--stride", oc_stride, "stride (default patch / 2)");
    oc->add_option("--value", oc_value, "patch fill value (default 0.5)");
    oc->add_option("--pgm", oc_pgm, "write heatmap as ASCII PGM");
    oc->add_option("--shape", oc_shape, "image shape HxWxC (default inferred)");
    oc->add_option("--out", oc_out, "report path");

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
        if (compute->parsed())
            return cmd_coverage_compute(cov_catalog, cov_k, cov_constrained,
                                        cov_min >= 0.0 ? std::optional<double>(cov_min)
                                                       : std::nullopt,
                                        cov_out);
        if (propose->parsed())
            return cmd_coverage_propose(prop_catalog, prop_k, prop_count, prop_greedy, prop_out);
        if (ver->parsed())
            return cmd_verify(ver_problem, ver_domain, ver_budget, ver_seed, ver_out);
        if (mbuild->parsed())
            return cmd_monitor_build(mb_model, mb_data, mb_layer, mb_gamma, mb_out, mb_report);
        if (mcheck->parsed()) return cmd_monitor_check(mc_monitor, mc_input, mc_out);
        if (pt->parsed())
            return cmd_perturb(pt_model, pt_data, pt_kinds, pt_seed, pt_jobs, pt_shape, pt_params,
                               pt_out);
        if (oc->parsed())
            return cmd_occlusion(oc_model, oc_input, oc_label, oc_patch, oc_stride, oc_value,
                                 oc_pgm, oc_shape, oc_out);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        json err{{"error", {{"kind", "UsageError"}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 2;
    } catch (const Error& e) {
        json err{{"error", {{"kind", error_kind(e)}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        json err{{"error", {{"kind", "Error"}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 2;
    }
}

} // namespace depkit
