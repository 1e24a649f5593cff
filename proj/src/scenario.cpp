#include "releqt/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace releqt {

namespace {

std::string join_lines(const std::vector<std::string>& v) {
    std::string s = "invalid scenario:";
    for (const std::string& e : v) s += "\n  - " + e;
    return s;
}

/// Table of tolerance entries addressable by name.
struct ToleranceEntry {
    const char* name;
    double Tolerances::*member;
};

const std::vector<ToleranceEntry>& tolerance_table() {
    static const std::vector<ToleranceEntry> t{
        {"frame_independence", &Tolerances::frame_independence},
        {"tail_fraction", &Tolerances::tail_fraction},
        {"refinement_floor", &Tolerances::refinement_floor},
        {"nyquist_fraction", &Tolerances::nyquist_fraction},
        {"unitarity", &Tolerances::unitarity},
        {"conjugation", &Tolerances::conjugation},
        {"orthonormality", &Tolerances::orthonormality},
        {"probability_sum", &Tolerances::probability_sum},
        {"reduction_equivalence", &Tolerances::reduction_equivalence},
        {"born_band", &Tolerances::born_band},
        {"integrator", &Tolerances::integrator},
        {"jump_bracket", &Tolerances::jump_bracket},
        {"jump_time", &Tolerances::jump_time},
        {"bookkeeping_factor", &Tolerances::bookkeeping_factor},
        {"covariance_tau", &Tolerances::covariance_tau},
        {"covariance_point", &Tolerances::covariance_point},
        {"start_condition", &Tolerances::start_condition},
        {"limit_gap", &Tolerances::limit_gap},
        {"algebra", &Tolerances::algebra},
        {"runtime_frame_independence", &Tolerances::runtime_frame_independence},
        {"runtime_born", &Tolerances::runtime_born},
        {"runtime_algebra", &Tolerances::runtime_algebra},
    };
    return t;
}

/// Reads typed values from YAML nodes, collecting every problem.
class Reader {
public:
    explicit Reader(std::vector<std::string>& errors) : errors_(errors) {}

    static std::string where(const YAML::Node& n) {
        const YAML::Mark m = n.Mark();
        if (m.is_null()) return "";
        return " (line " + std::to_string(m.line + 1) + ")";
    }

    void fail(const std::string& msg, const YAML::Node& n) { errors_.push_back(msg + where(n)); }

    void keys(const YAML::Node& n, const std::string& section, std::initializer_list<const char*> allowed) {
        if (!n.IsMap()) {
            fail(section + ": expected a mapping", n);
            return;
        }
        const std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& kv : n) {
            const std::string k = kv.first.as<std::string>();
            if (!ok.count(k)) fail(section + ": unknown key '" + k + "'", kv.first);
        }
    }

    template <class T>
    bool get(const YAML::Node& parent, const char* key, T& out, const std::string& section) {
        const YAML::Node n = parent[key];
        if (!n) return false;
        try {
            out = n.as<T>();
            return true;
        } catch (const YAML::Exception&) {
            fail(section + "." + key + ": wrong type", n);
            return false;
        }
    }

    bool number(const YAML::Node& parent, const char* key, double& out, const std::string& section) {
        const YAML::Node n = parent[key];
        if (!n) return false;
        if (n.IsScalar()) {
            const std::string s = n.Scalar();
            if (s == "inf" || s == ".inf" || s == "infinity") {
                out = std::numeric_limits<double>::infinity();
                return true;
            }
        }
        return get(parent, key, out, section);
    }

    bool list(const YAML::Node& n, std::size_t size, std::vector<double>& out, const std::string& what) {
        if (!n.IsSequence() || n.size() != size) {
            fail(what + ": expected a list of " + std::to_string(size) + " numbers", n);
            return false;
        }
        out.clear();
        for (const auto& e : n) {
            try {
                out.push_back(e.as<double>());
            } catch (const YAML::Exception&) {
                fail(what + ": expected numbers", e);
                return false;
            }
        }
        return true;
    }

    bool vec3(const YAML::Node& parent, const char* key, Vec3& out, const std::string& section) {
        const YAML::Node n = parent[key];
        if (!n) return false;
        std::vector<double> v;
        if (!list(n, 3, v, section + "." + key)) return false;
        out = Vec3(v[0], v[1], v[2]);
        return true;
    }

    bool vec4(const YAML::Node& parent, const char* key, Vec4& out, const std::string& section) {
        const YAML::Node n = parent[key];
        if (!n) return false;
        std::vector<double> v;
        if (!list(n, 4, v, section + "." + key)) return false;
        out = Vec4(v[0], v[1], v[2], v[3]);
        return true;
    }

    /// Four entries, each a number or a [re, im] pair.
    bool spinor(const YAML::Node& parent, const char* key, Spinor& out, const std::string& section) {
        const YAML::Node n = parent[key];
        if (!n) return false;
        if (!n.IsSequence() || n.size() != 4) {
            fail(section + "." + key + ": expected four components", n);
            return false;
        }
        for (std::size_t i = 0; i < 4; ++i) {
            const YAML::Node e = n[i];
            try {
                if (e.IsSequence() && e.size() == 2)
                    out[static_cast<Eigen::Index>(i)] = cplx(e[0].as<double>(), e[1].as<double>());
                else
                    out[static_cast<Eigen::Index>(i)] = cplx(e.as<double>(), 0.0);
            } catch (const YAML::Exception&) {
                fail(section + "." + key + ": components are numbers or [re, im] pairs", e);
                return false;
            }
        }
        return true;
    }

private:
    std::vector<std::string>& errors_;
};

int parse_axis(const std::string& s) {
    if (s == "x" || s == "1") return 1;
    if (s == "y" || s == "2") return 2;
    if (s == "z" || s == "3") return 3;
    return 0;
}

LorentzTransform read_frame(Reader& rd, const YAML::Node& n) {
    if (n.IsMap()) {
        rd.keys(n, "frame", {"matrix", "shift"});
        std::vector<double> m, a{0, 0, 0, 0};
        if (!rd.list(n["matrix"], 16, m, "frame.matrix")) return {};
        if (n["shift"] && !rd.list(n["shift"], 4, a, "frame.shift")) return {};
        Mat4 l;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) l(i, j) = m[static_cast<std::size_t>(4 * i + j)];
        try {
            return LorentzTransform::from_matrix(l, Vec4(a[0], a[1], a[2], a[3]));
        } catch (const DomainError& e) {
            rd.fail(std::string("frame: ") + e.what(), n);
            return {};
        }
    }
    if (!n.IsSequence()) {
        rd.fail("frame: expected a matrix/shift mapping or a list of steps", n);
        return {};
    }
    // Steps apply in list order.
    LorentzTransform t;
    for (const auto& step : n) {
        rd.keys(step, "frame step", {"boost", "rotate", "translate"});
        if (const YAML::Node b = step["boost"]) {
            rd.keys(b, "frame.boost", {"axis", "rapidity"});
            std::string axis = "x";
            double eta = 0.0;
            rd.get(b, "axis", axis, "frame.boost");
            rd.get(b, "rapidity", eta, "frame.boost");
            const int ax = parse_axis(axis);
            if (!ax) rd.fail("frame.boost.axis: expected x, y or z", b);
            else t = LorentzTransform::boost(ax, eta) * t;
        } else if (step["rotate"]) {
            Vec3 phi = Vec3::Zero();
            if (rd.vec3(step, "rotate", phi, "frame")) t = LorentzTransform::rotation(phi) * t;
        } else if (step["translate"]) {
            Vec4 a = Vec4::Zero();
            if (rd.vec4(step, "translate", a, "frame")) t = LorentzTransform::translation(a) * t;
        }
    }
    return t;
}

DetectorSpec read_detector(Reader& rd, const YAML::Node& n, const Scenario& s, std::size_t index) {
    const std::string sec = "detectors[" + std::to_string(index) + "]";
    rd.keys(n, sec, {"id", "kappa", "width", "rest", "worldline"});
    DetectorSpec d;
    d.id = static_cast<int>(index + 1);
    rd.get(n, "id", d.id, sec);
    rd.number(n, "kappa", d.kappa, sec);
    rd.number(n, "width", d.width, sec);
    Vec3 x;
    if (n["rest"] && n["worldline"]) rd.fail(sec + ": give either 'rest' or 'worldline'", n);
    if (rd.vec3(n, "rest", x, sec)) {
        const DetectorSpec r = resting_detector(d.id, x, d.kappa, d.width, s.preparation, s.c);
        d.worldline = r.worldline;
    } else if (const YAML::Node w = n["worldline"]) {
        if (!w.IsSequence()) {
            rd.fail(sec + ".worldline: expected a list of [tau, t, x, y, z] nodes", w);
        } else {
            for (const auto& e : w) {
                std::vector<double> v;
                if (rd.list(e, 5, v, sec + ".worldline node")) d.worldline.push_back({v[0], Vec4(v[1], v[2], v[3], v[4])});
            }
        }
    } else {
        rd.fail(sec + ": needs 'rest' or 'worldline'", n);
    }
    return d;
}

void read_detectors(Reader& rd, const YAML::Node& n, const Scenario& s, std::vector<DetectorSpec>& out,
                    const char* what) {
    if (!n) return;
    if (!n.IsSequence()) {
        rd.fail(std::string(what) + ": expected a list", n);
        return;
    }
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(read_detector(rd, n[i], s, i));
}

Scenario read_document(const YAML::Node& root, const std::filesystem::path& base, std::vector<std::string>& errs) {
    Reader rd(errs);
    Scenario s;
    s.base_dir = base;
    if (!root.IsMap()) {
        rd.fail("scenario: expected a mapping at the top level", root);
        return s;
    }
    rd.keys(root, "scenario", {"name", "mass", "c", "representation", "seed", "preparation", "grid", "integrator",
                               "frame", "detection", "measurements", "planes", "output", "tolerances"});
    rd.get(root, "name", s.name, "scenario");
    rd.get(root, "mass", s.mass, "scenario");
    rd.get(root, "c", s.c, "scenario");
    rd.get(root, "representation", s.representation, "scenario");
    rd.get(root, "seed", s.seed, "scenario");

    if (const YAML::Node t = root["tolerances"]) {
        if (!t.IsMap()) {
            rd.fail("tolerances: expected a mapping", t);
        } else {
            for (const auto& kv : t) {
                const std::string k = kv.first.as<std::string>();
                bool found = false;
                for (const ToleranceEntry& e : tolerance_table())
                    if (k == e.name) {
                        found = true;
                        rd.get(t, e.name, s.tolerances.*e.member, "tolerances");
                    }
                if (!found) rd.fail("tolerances: unknown key '" + k + "'", kv.first);
            }
        }
    }
    s.integrator.tolerance = s.tolerances.integrator;
    s.integrator.jump_tolerance = s.tolerances.jump_bracket;

    if (const YAML::Node g = root["grid"]) {
        rd.keys(g, "grid", {"radius", "points", "center"});
        rd.get(g, "radius", s.grid.radius, "grid");
        rd.get(g, "points", s.grid.n, "grid");
        rd.vec3(g, "center", s.grid.center, "grid");
    }
    if (const YAML::Node in = root["integrator"]) {
        rd.keys(in, "integrator", {"method", "tolerance", "dtau", "jump_tolerance", "max_steps"});
        std::string method = "dormand_prince";
        rd.get(in, "method", method, "integrator");
        if (method == "dormand_prince")
            s.integrator.method = IntegratorMethod::dormand_prince;
        else if (method == "split_step")
            s.integrator.method = IntegratorMethod::split_step;
        else
            rd.fail("integrator.method: expected dormand_prince or split_step", in["method"]);
        rd.get(in, "tolerance", s.integrator.tolerance, "integrator");
        rd.get(in, "dtau", s.integrator.dtau, "integrator");
        rd.get(in, "jump_tolerance", s.integrator.jump_tolerance, "integrator");
        rd.get(in, "max_steps", s.integrator.max_steps, "integrator");
    }
    if (const YAML::Node f = root["frame"]) s.frame = read_frame(rd, f);

    if (const YAML::Node p = root["preparation"]) {
        rd.keys(p, "preparation", {"tau", "point", "state"});
        rd.get(p, "tau", s.preparation.tau, "preparation");
        rd.vec4(p, "point", s.preparation.point, "preparation");
        if (const YAML::Node st = p["state"]) {
            rd.keys(st, "preparation.state",
                    {"kind", "momentum", "center", "sigma_p", "polarization", "sign", "cutoff_sigmas", "file"});
            std::string kind = "gaussian";
            rd.get(st, "kind", kind, "preparation.state");
            if (kind == "gaussian") {
                s.state.kind = StateSpec::Kind::gaussian;
                GaussianPacket& g = s.state.packet;
                rd.vec3(st, "momentum", g.momentum, "preparation.state");
                rd.vec3(st, "center", g.center, "preparation.state");
                rd.get(st, "sigma_p", g.sigma_p, "preparation.state");
                rd.spinor(st, "polarization", g.polarization, "preparation.state");
                rd.get(st, "sign", g.sign, "preparation.state");
                rd.get(st, "cutoff_sigmas", g.cutoff_sigmas, "preparation.state");
            } else if (kind == "file") {
                s.state.kind = StateSpec::Kind::file;
                if (!rd.get(st, "file", s.state.file, "preparation.state"))
                    rd.fail("preparation.state: kind 'file' needs a 'file' entry", st);
            } else {
                rd.fail("preparation.state.kind: expected gaussian or file", st["kind"]);
            }
        }
    }

    if (const YAML::Node d = root["detection"]) {
        rd.keys(d, "detection", {"tau_max", "rearm", "max_events", "trajectories", "detectors", "replacement"});
        rd.get(d, "tau_max", s.tau_max, "detection");
        std::string rearm = "keep";
        rd.get(d, "rearm", rearm, "detection");
        if (rearm == "keep")
            s.rearm = RearmPolicy::keep;
        else if (rearm == "drop")
            s.rearm = RearmPolicy::drop;
        else if (rearm == "replace")
            s.rearm = RearmPolicy::replace;
        else
            rd.fail("detection.rearm: expected keep, drop or replace", d["rearm"]);
        std::size_t me = 0;
        if (rd.get(d, "max_events", me, "detection")) s.max_events = me;
        rd.get(d, "trajectories", s.trajectories, "detection");
        read_detectors(rd, d["detectors"], s, s.detectors, "detection.detectors");
        read_detectors(rd, d["replacement"], s, s.replacement, "detection.replacement");
        if (s.detectors.empty()) rd.fail("detection: at least one detector is required", d);
    }

    if (const YAML::Node m = root["measurements"]) {
        if (!m.IsSequence()) rd.fail("measurements: expected a list", m);
        for (std::size_t i = 0; m.IsSequence() && i < m.size(); ++i) {
            const YAML::Node e = m[i];
            const std::string sec = "measurements[" + std::to_string(i) + "]";
            rd.keys(e, sec, {"tau", "point", "observable"});
            MeasurementSpec ms;
            rd.get(e, "tau", ms.tau, sec);
            rd.vec4(e, "point", ms.point, sec);
            const YAML::Node o = e["observable"];
            if (!o) {
                rd.fail(sec + ": missing 'observable'", e);
                continue;
            }
            const std::string osec = sec + ".observable";
            rd.keys(o, osec, {"kind", "eigenvalues", "complement_eigenvalue", "time", "centers", "width", "spinor",
                              "files"});
            std::string kind = "windows";
            rd.get(o, "kind", kind, osec);
            ObservableSpec& ob = ms.observable;
            rd.get(o, "eigenvalues", ob.eigenvalues, osec);
            rd.get(o, "complement_eigenvalue", ob.complement_eigenvalue, osec);
            if (kind == "windows") {
                ob.kind = ObservableSpec::Kind::windows;
                ob.time = ms.point[0];
                rd.get(o, "time", ob.time, osec);
                rd.get(o, "width", ob.width, osec);
                rd.spinor(o, "spinor", ob.spinor, osec);
                if (const YAML::Node c = o["centers"]; c && c.IsSequence()) {
                    for (const auto& x : c) {
                        std::vector<double> v;
                        if (rd.list(x, 3, v, osec + ".centers")) ob.centers.emplace_back(v[0], v[1], v[2]);
                    }
                } else {
                    rd.fail(osec + ": windows need a list of 'centers'", o);
                }
                if (ob.eigenvalues.empty())
                    for (std::size_t j = 0; j < ob.centers.size(); ++j) ob.eigenvalues.push_back(static_cast<double>(j + 1));
                if (ob.eigenvalues.size() != ob.centers.size()) rd.fail(osec + ": one eigenvalue per window", o);
            } else if (kind == "states") {
                ob.kind = ObservableSpec::Kind::states;
                rd.get(o, "files", ob.files, osec);
                if (ob.files.empty()) rd.fail(osec + ": states need a list of 'files'", o);
                if (ob.eigenvalues.empty())
                    for (std::size_t j = 0; j < ob.files.size(); ++j) ob.eigenvalues.push_back(static_cast<double>(j + 1));
                if (ob.eigenvalues.size() != ob.files.size()) rd.fail(osec + ": one eigenvalue per state", o);
            } else {
                rd.fail(osec + ".kind: expected windows or states", o["kind"]);
            }
            s.measurements.push_back(ms);
        }
    }

    if (const YAML::Node pl = root["planes"]) {
        if (!pl.IsSequence()) rd.fail("planes: expected a list", pl);
        for (std::size_t i = 0; pl.IsSequence() && i < pl.size(); ++i) {
            const std::string sec = "planes[" + std::to_string(i) + "]";
            rd.keys(pl[i], sec, {"y", "alpha", "phi"});
            HyperplaneParams h;
            rd.vec4(pl[i], "y", h.y, sec);
            rd.vec3(pl[i], "alpha", h.alpha, sec);
            rd.vec3(pl[i], "phi", h.phi, sec);
            s.planes.push_back(h);
        }
    }

    if (const YAML::Node o = root["output"]) {
        rd.keys(o, "output", {"directory", "events", "survival"});
        rd.get(o, "directory", s.output.directory, "output");
        rd.get(o, "events", s.output.events, "output");
        rd.get(o, "survival", s.output.survival, "output");
    }
    return s;
}

template <class F>
void collect(std::vector<std::string>& errs, const std::string& prefix, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        errs.push_back(prefix + e.what());
    }
}

}  // namespace

ScenarioError::ScenarioError(std::vector<std::string> violations)
    : DomainError(join_lines(violations)), violations_(std::move(violations)) {}

DetectorSpec resting_detector(int id, const Vec3& x, double kappa, double width, const Preparation& prep, double c) {
    DetectorSpec d;
    d.id = id;
    d.kappa = kappa;
    d.width = width;
    const Vec4& x0 = prep.point;
    const double r = (x - x0.tail<3>()).norm();
    const double t0 = x0[0] - r;
    d.worldline = {{prep.tau, Vec4(t0, x[0], x[1], x[2])}, {prep.tau + 1.0, Vec4(t0 + c, x[0], x[1], x[2])}};
    return d;
}

std::vector<std::string> validate_scenario(const Scenario& s) {
    std::vector<std::string> errs;
    const Tolerances& tol = s.tolerances;
    if (!(s.mass > 0.0)) errs.push_back("mass must be positive");
    if (!(s.c > 0.0)) errs.push_back("c must be positive");
    if (s.representation != "dirac") errs.push_back("representation: only 'dirac' is available");
    if (!(s.grid.radius > 0.0)) errs.push_back("grid.radius must be positive");
    if (s.grid.n < 4) errs.push_back("grid.points must be at least 4");
    if (!(s.integrator.dtau > 0.0)) errs.push_back("integrator.dtau must be positive");
    if (!(s.integrator.tolerance > 0.0)) errs.push_back("integrator.tolerance must be positive");
    if (s.is_detection() && !s.measurements.empty())
        errs.push_back("a scenario holds either a detector list or a measurement schedule, not both");
    if (s.state.kind == StateSpec::Kind::gaussian && !s.frame.is_identity(0.0))
        errs.push_back("a Gaussian initial state needs the identity frame; transformed scenarios use state files");

    if (!s.planes.empty() && s.c != 1.0) errs.push_back("planes: hyperplane norms are reported for c = 1 only");
    for (std::size_t i = 0; i < s.planes.size(); ++i)
        collect(errs, "planes[" + std::to_string(i) + "]: hyperplane parameters need |alpha| < 1 and |phi| < pi: ",
                [&] { s.planes[i].validate(); });

    auto check_detectors = [&](const std::vector<DetectorSpec>& ds, const std::string& what) {
        std::set<int> ids;
        for (const DetectorSpec& d : ds) {
            const std::string p = what + " " + std::to_string(d.id) + ": ";
            if (!ids.insert(d.id).second) errs.push_back(p + "duplicate id");
            collect(errs, p, [&] { d.validate(); });
        }
    };
    check_detectors(s.detectors, "detector");
    check_detectors(s.replacement, "replacement detector");
    for (const DetectorSpec& d : s.detectors)
        collect(errs, "light-cone start condition: ", [&] {
                    if (d.worldline.size() >= 2) check_start_condition(s.preparation, d, tol.start_condition);
                });
    if (s.is_detection() && !(s.tau_max > s.preparation.tau))
        errs.push_back("detection.tau_max must lie after the preparation time");

    if (!s.measurements.empty()) {
        std::vector<ScheduledMeasurement> order;
        for (const MeasurementSpec& m : s.measurements) order.push_back({m.tau, m.point, {}});
        collect(errs, "measurement schedule violates the causal ordering: ", [&] { validate_schedule(s.preparation, order); });
        if (s.c != 1.0) errs.push_back("measurement scenarios use c = 1");
    }

    // Nyquist bound of the initial state on the scenario lattice.
    if (errs.empty() && s.frame.is_identity(0.0)) {
        collect(errs, "initial state violates the Nyquist bound: ", [&] {
            const QuantumState psi = build_initial_state(s);
            const auto lat = SpectralLattice::for_slice(s.mass, s.c, s.grid.radius, s.grid.n, s.grid.center);
            std::vector<cplx> coeffs;
            if (const auto* ml = std::get_if<ModeListState>(&psi)) {
                if (std::abs(ml->period - lat->period()) > 1e-12 * lat->period())
                    throw DomainError("state period must equal the grid box 2R");
                coeffs = lattice_coefficients(*ml, *lat, 0.0);
            } else {
                const auto& sl = std::get<GridSliceState>(psi);
                coeffs.resize(4 * lat->size());
                lat->to_coeffs(lat->from_slice(sl.values), coeffs);
            }
            const double edge = lat->edge_fraction(coeffs);
            if (edge > tol.nyquist_fraction) {
                char buf[160];
                std::snprintf(buf, sizeof buf, "%.3g of the norm sits in the outermost wavevector shell (bound %.1g); "
                                               "refine the grid or narrow the packet", edge, tol.nyquist_fraction);
                throw DomainError(buf);
            }
        });
    }
    return errs;
}

Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ScenarioError({"parse error at line " + std::to_string(e.mark.line + 1) + ": " + e.msg});
    }
    std::vector<std::string> errs;
    Scenario s = read_document(root, base_dir, errs);
    for (std::string& e : validate_scenario(s)) errs.push_back(std::move(e));
    if (!errs.empty()) throw ScenarioError(errs);
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError({"cannot open scenario file '" + path.string() + "'"});
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

QuantumState build_initial_state(const Scenario& s) {
    if (s.state.kind == StateSpec::Kind::file) return load_state((s.base_dir / s.state.file).string());
    const double period = 2.0 * s.grid.radius;
    if (s.c == 1.0) return gaussian_packet(s.state.packet, s.mass, period);
    const auto lat = SpectralLattice::for_slice(s.mass, s.c, s.grid.radius, s.grid.n, s.grid.center);
    const std::vector<cplx> coeffs = gaussian_coefficients(s.state.packet, *lat);
    std::vector<cplx> values(coeffs.size());
    lat->to_values(coeffs, values);
    Vec4 y = Vec4::Zero();
    y.tail<3>() = s.grid.center;
    GridSliceState slice(make_grid(HyperplaneParams::make(y), s.grid.radius, s.grid.n), s.mass, s.c);
    slice.values = lat->to_slice(values);
    return slice;
}

DetectionSetup build_detection_setup(const Scenario& s) {
    DetectionSetup d;
    d.mass = s.mass;
    d.c = s.c;
    d.grid = s.grid;
    d.preparation = s.preparation;
    d.detectors = s.detectors;
    d.frame = s.frame;
    d.tau_max = s.tau_max;
    d.integrator = s.integrator;
    d.rearm = s.rearm;
    d.replacement = s.replacement;
    d.max_events = s.max_events;
    return d;
}

std::vector<ScheduledMeasurement> build_schedule(const Scenario& s) {
    std::vector<ScheduledMeasurement> out;
    for (const MeasurementSpec& m : s.measurements) {
        const ObservableSpec& o = m.observable;
        Observable obs;
        if (o.kind == ObservableSpec::Kind::windows) {
            Vec4 y = Vec4::Zero();
            y[0] = o.time;
            y.tail<3>() = s.grid.center;
            const SliceObservable so = window_observable(make_grid(HyperplaneParams::make(y), s.grid.radius, s.grid.n),
                                                         s.mass, o.centers, o.width, o.spinor);
            obs = covariant_observable(so);
        } else {
            for (const std::string& f : o.files) {
                QuantumState q = load_state((s.base_dir / f).string());
                if (!std::holds_alternative<ModeListState>(q)) throw DomainError("projector file '" + f + "' is not a mode list");
                obs.projectors.push_back(std::get<ModeListState>(q));
            }
        }
        obs.eigenvalues = o.eigenvalues;
        obs.complement_eigenvalue = o.complement_eigenvalue;
        obs.validate(s.tolerances.orthonormality);
        out.push_back({m.tau, m.point, std::move(obs)});
    }
    return out;
}

Scenario transform_scenario_file(const Scenario& s, const LorentzTransform& t, const std::filesystem::path& out) {
    if (s.c != 1.0) throw DomainError("transform: scenarios with c != 1 are lab-frame only");
    const QuantumState psi = build_initial_state(s);
    if (!std::holds_alternative<ModeListState>(psi)) throw DomainError("transform: the initial state must be a mode list");
    const std::filesystem::path dir = out.has_parent_path() ? out.parent_path() : std::filesystem::path(".");
    const std::string stem = out.stem().string();

    Scenario r = s;
    r.base_dir = dir;
    r.name = s.name.empty() ? "transformed" : s.name + " (transformed)";
    r.frame = t * s.frame;
    r.state.kind = StateSpec::Kind::file;
    r.state.file = stem + ".state";
    r.preparation.point = t.apply(s.preparation.point);

    if (s.is_detection()) {
        const DetectionScenario moved = transform_scenario(DetectionScenario{psi, build_detection_setup(s)}, t);
        save_state((dir / r.state.file).string(), moved.psi0);
        r.detectors = moved.setup.detectors;
        r.replacement = moved.setup.replacement;
    } else {
        MeasurementScenario ms{std::get<ModeListState>(psi), s.preparation, build_schedule(s)};
        const MeasurementScenario moved = transform_scenario(ms, t);
        save_state((dir / r.state.file).string(), QuantumState(moved.psi0));
        for (std::size_t i = 0; i < moved.schedule.size(); ++i) {
            MeasurementSpec& m = r.measurements[i];
            m.point = moved.schedule[i].z;
            ObservableSpec o;
            o.kind = ObservableSpec::Kind::states;
            o.eigenvalues = s.measurements[i].observable.eigenvalues;
            o.complement_eigenvalue = s.measurements[i].observable.complement_eigenvalue;
            for (std::size_t j = 0; j < moved.schedule[i].observable.size(); ++j) {
                const std::string f = stem + ".m" + std::to_string(i + 1) + ".p" + std::to_string(j + 1) + ".state";
                save_state((dir / f).string(), QuantumState(moved.schedule[i].observable.projectors[j]));
                o.files.push_back(f);
            }
            m.observable = o;
        }
    }
    return r;
}

namespace {

void emit_seq(YAML::Emitter& e, std::initializer_list<double> v) {
    e << YAML::Flow << YAML::BeginSeq;
    for (double x : v) e << x;
    e << YAML::EndSeq;
}

void emit_vec3(YAML::Emitter& e, const Vec3& v) { emit_seq(e, {v[0], v[1], v[2]}); }
void emit_vec4(YAML::Emitter& e, const Vec4& v) { emit_seq(e, {v[0], v[1], v[2], v[3]}); }

void emit_spinor(YAML::Emitter& e, const Spinor& s) {
    e << YAML::Flow << YAML::BeginSeq;
    for (int i = 0; i < 4; ++i) {
        e << YAML::Flow << YAML::BeginSeq << s[i].real() << s[i].imag() << YAML::EndSeq;
    }
    e << YAML::EndSeq;
}

void emit_number(YAML::Emitter& e, double v) {
    if (std::isinf(v))
        e << ".inf";
    else
        e << v;
}

void emit_detectors(YAML::Emitter& e, const std::vector<DetectorSpec>& ds) {
    e << YAML::BeginSeq;
    for (const DetectorSpec& d : ds) {
        e << YAML::BeginMap << YAML::Key << "id" << YAML::Value << d.id << YAML::Key << "kappa" << YAML::Value
          << d.kappa << YAML::Key << "width" << YAML::Value;
        emit_number(e, d.width);
        e << YAML::Key << "worldline" << YAML::Value << YAML::BeginSeq;
        for (const WorldlineNode& n : d.worldline) emit_seq(e, {n.tau, n.z[0], n.z[1], n.z[2], n.z[3]});
        e << YAML::EndSeq << YAML::EndMap;
    }
    e << YAML::EndSeq;
}

}  // namespace

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
    YAML::Emitter e;
    e.SetDoublePrecision(17);
    e << YAML::BeginMap;
    if (!s.name.empty()) e << YAML::Key << "name" << YAML::Value << s.name;
    e << YAML::Key << "mass" << YAML::Value << s.mass;
    e << YAML::Key << "c" << YAML::Value << s.c;
    e << YAML::Key << "representation" << YAML::Value << s.representation;
    e << YAML::Key << "seed" << YAML::Value << s.seed;

    e << YAML::Key << "preparation" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "tau" << YAML::Value << s.preparation.tau;
    e << YAML::Key << "point" << YAML::Value;
    emit_vec4(e, s.preparation.point);
    e << YAML::Key << "state" << YAML::Value << YAML::BeginMap;
    if (s.state.kind == StateSpec::Kind::file) {
        e << YAML::Key << "kind" << YAML::Value << "file" << YAML::Key << "file" << YAML::Value << s.state.file;
    } else {
        const GaussianPacket& g = s.state.packet;
        e << YAML::Key << "kind" << YAML::Value << "gaussian";
        e << YAML::Key << "momentum" << YAML::Value;
        emit_vec3(e, g.momentum);
        e << YAML::Key << "center" << YAML::Value;
        emit_vec3(e, g.center);
        e << YAML::Key << "sigma_p" << YAML::Value << g.sigma_p;
        e << YAML::Key << "polarization" << YAML::Value;
        emit_spinor(e, g.polarization);
        e << YAML::Key << "sign" << YAML::Value << g.sign;
        e << YAML::Key << "cutoff_sigmas" << YAML::Value << g.cutoff_sigmas;
    }
    e << YAML::EndMap << YAML::EndMap;

    e << YAML::Key << "grid" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "radius" << YAML::Value << s.grid.radius << YAML::Key << "points" << YAML::Value << s.grid.n;
    e << YAML::Key << "center" << YAML::Value;
    emit_vec3(e, s.grid.center);
    e << YAML::EndMap;

    e << YAML::Key << "integrator" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "method" << YAML::Value
      << (s.integrator.method == IntegratorMethod::split_step ? "split_step" : "dormand_prince");
    e << YAML::Key << "tolerance" << YAML::Value << s.integrator.tolerance;
    e << YAML::Key << "dtau" << YAML::Value << s.integrator.dtau;
    e << YAML::Key << "jump_tolerance" << YAML::Value << s.integrator.jump_tolerance;
    e << YAML::Key << "max_steps" << YAML::Value << s.integrator.max_steps;
    e << YAML::EndMap;

    if (!s.frame.is_identity(0.0)) {
        e << YAML::Key << "frame" << YAML::Value << YAML::BeginMap << YAML::Key << "matrix" << YAML::Value << YAML::Flow
          << YAML::BeginSeq;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) e << s.frame.matrix()(i, j);
        e << YAML::EndSeq << YAML::Key << "shift" << YAML::Value;
        emit_vec4(e, s.frame.shift());
        e << YAML::EndMap;
    }

    if (s.is_detection()) {
        e << YAML::Key << "detection" << YAML::Value << YAML::BeginMap;
        e << YAML::Key << "tau_max" << YAML::Value << s.tau_max;
        e << YAML::Key << "rearm" << YAML::Value
          << (s.rearm == RearmPolicy::keep ? "keep" : s.rearm == RearmPolicy::drop ? "drop" : "replace");
        if (s.max_events) e << YAML::Key << "max_events" << YAML::Value << *s.max_events;
        if (s.trajectories) e << YAML::Key << "trajectories" << YAML::Value << s.trajectories;
        e << YAML::Key << "detectors" << YAML::Value;
        emit_detectors(e, s.detectors);
        if (!s.replacement.empty()) {
            e << YAML::Key << "replacement" << YAML::Value;
            emit_detectors(e, s.replacement);
        }
        e << YAML::EndMap;
    }

    if (!s.measurements.empty()) {
        e << YAML::Key << "measurements" << YAML::Value << YAML::BeginSeq;
        for (const MeasurementSpec& m : s.measurements) {
            const ObservableSpec& o = m.observable;
            e << YAML::BeginMap << YAML::Key << "tau" << YAML::Value << m.tau << YAML::Key << "point" << YAML::Value;
            emit_vec4(e, m.point);
            e << YAML::Key << "observable" << YAML::Value << YAML::BeginMap;
            e << YAML::Key << "kind" << YAML::Value << (o.kind == ObservableSpec::Kind::windows ? "windows" : "states");
            e << YAML::Key << "eigenvalues" << YAML::Value << YAML::Flow << o.eigenvalues;
            e << YAML::Key << "complement_eigenvalue" << YAML::Value << o.complement_eigenvalue;
            if (o.kind == ObservableSpec::Kind::windows) {
                e << YAML::Key << "time" << YAML::Value << o.time << YAML::Key << "width" << YAML::Value << o.width;
                e << YAML::Key << "spinor" << YAML::Value;
                emit_spinor(e, o.spinor);
                e << YAML::Key << "centers" << YAML::Value << YAML::BeginSeq;
                for (const Vec3& c : o.centers) emit_vec3(e, c);
                e << YAML::EndSeq;
            } else {
                e << YAML::Key << "files" << YAML::Value << YAML::BeginSeq;
                for (const std::string& f : o.files) e << f;
                e << YAML::EndSeq;
            }
            e << YAML::EndMap << YAML::EndMap;
        }
        e << YAML::EndSeq;
    }

    if (!s.planes.empty()) {
        e << YAML::Key << "planes" << YAML::Value << YAML::BeginSeq;
        for (const HyperplaneParams& h : s.planes) {
            e << YAML::BeginMap << YAML::Key << "y" << YAML::Value;
            emit_vec4(e, h.y);
            e << YAML::Key << "alpha" << YAML::Value;
            emit_vec3(e, h.alpha);
            e << YAML::Key << "phi" << YAML::Value;
            emit_vec3(e, h.phi);
            e << YAML::EndMap;
        }
        e << YAML::EndSeq;
    }

    e << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "directory" << YAML::Value << s.output.directory;
    e << YAML::Key << "events" << YAML::Value << s.output.events;
    e << YAML::Key << "survival" << YAML::Value << s.output.survival;
    e << YAML::EndMap;

    e << YAML::Key << "tolerances" << YAML::Value << YAML::BeginMap;
    for (const ToleranceEntry& t : tolerance_table()) e << YAML::Key << t.name << YAML::Value << s.tolerances.*t.member;
    e << YAML::EndMap;
    e << YAML::EndMap;

    std::ofstream out(path);
    if (!out) throw DomainError("cannot write scenario file '" + path.string() + "'");
    out << e.c_str() << '\n';
}

void write_survival_csv(std::ostream& os, std::span<const SurvivalSample> samples) {
    os << "tau,norm_sq,accumulated\n";
    char buf[96];
    for (const SurvivalSample& s : samples) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", s.tau, s.norm_sq, s.accumulated);
        os << buf;
    }
}

}  // namespace releqt
