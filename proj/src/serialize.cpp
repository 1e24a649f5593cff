// Text header followed by raw little-endian IEEE-754 data.
//
//   releqt-state 1
//   kind modes|slice
//   ... key/value lines, numbers in shortest round-trip form ...
//   end_header
//   <payload>
//
// Mode payload, one record per mode in canonical order:
//   int32 key[3], int32 sign, float64 p[4], float64 weight, float64 amp[8]
//   (amp as re, im pairs for components 0..3).
// Slice payload: 4 N^3 complex values (re, im), component-major, point index
// (i N + j) N + l with the last axis fastest.

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "releqt/states.hpp"

namespace releqt {

namespace {

constexpr const char* magic = "releqt-state 1";

std::string num(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_num(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw DomainError("state file: malformed number '" + s + "'");
    return v;
}

void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 8);
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

void put_i32(std::ostream& os, std::int32_t v) {
    const auto u = static_cast<std::uint32_t>(v);
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xffu);
    os.write(b, 4);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw DomainError("state file: truncated payload");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

std::int32_t get_i32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw DomainError("state file: truncated payload");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return static_cast<std::int32_t>(v);
}

template <typename V>
std::string join(const V& v, int count) {
    std::string s;
    for (int i = 0; i < count; ++i) {
        if (i) s += ' ';
        s += num(v[i]);
    }
    return s;
}

std::vector<double> numbers(const std::string& text) {
    std::istringstream ss(text);
    std::vector<double> out;
    std::string tok;
    while (ss >> tok) out.push_back(parse_num(tok));
    return out;
}

}  // namespace

void write_state(std::ostream& os, const QuantumState& state) {
    os << magic << '\n';
    if (const auto* ml = std::get_if<ModeListState>(&state)) {
        const Mat4& l = ml->frame.matrix();
        os << "kind modes\n";
        os << "mass " << num(ml->mass) << '\n';
        os << "period " << num(ml->period) << '\n';
        os << "frame_matrix " << join(l.reshaped<Eigen::RowMajor>(), 16) << '\n';
        os << "frame_shift " << join(ml->frame.shift(), 4) << '\n';
        os << "count " << ml->modes.size() << '\n';
        os << "layout int32 key[3], int32 sign, float64 p[4], float64 weight, float64 amp[8]\n";
        os << "end_header\n";
        for (const Mode& m : ml->modes) {
            for (int k : m.key) put_i32(os, k);
            put_i32(os, m.sign);
            for (int i = 0; i < 4; ++i) put_f64(os, m.p[i]);
            put_f64(os, m.weight);
            for (int i = 0; i < 4; ++i) {
                put_f64(os, m.amp[i].real());
                put_f64(os, m.amp[i].imag());
            }
        }
        return;
    }
    const auto& sl = std::get<GridSliceState>(state);
    const HyperplaneParams& p = sl.grid.params();
    os << "kind slice\n";
    os << "mass " << num(sl.mass) << '\n';
    os << "c " << num(sl.c) << '\n';
    os << "grid_radius " << num(sl.grid.radius()) << '\n';
    os << "grid_n " << sl.grid.n() << '\n';
    os << "plane_y " << join(p.y, 4) << '\n';
    os << "plane_alpha " << join(p.alpha, 3) << '\n';
    os << "plane_phi " << join(p.phi, 3) << '\n';
    os << "potential " << (sl.potential ? "external" : "none") << '\n';
    os << "count " << sl.values.size() << '\n';
    os << "layout complex128 component-major, index c*N^3 + (i*N + j)*N + l\n";
    os << "end_header\n";
    for (const cplx& v : sl.values) {
        put_f64(os, v.real());
        put_f64(os, v.imag());
    }
}

QuantumState read_state(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != magic) throw DomainError("state file: missing 'releqt-state 1' header");
    std::map<std::string, std::string> header;
    while (std::getline(is, line)) {
        if (line == "end_header") break;
        const auto sp = line.find(' ');
        header[line.substr(0, sp)] = sp == std::string::npos ? "" : line.substr(sp + 1);
    }
    auto field = [&](const std::string& key) -> const std::string& {
        const auto it = header.find(key);
        if (it == header.end()) throw DomainError("state file: header lacks '" + key + "'");
        return it->second;
    };
    auto vec = [&](const std::string& key, std::size_t n) {
        std::vector<double> v = numbers(field(key));
        if (v.size() != n) throw DomainError("state file: '" + key + "' needs " + std::to_string(n) + " numbers");
        return v;
    };
    const std::size_t count = std::stoull(field("count"));

    if (field("kind") == "modes") {
        ModeListState ml;
        ml.mass = parse_num(field("mass"));
        ml.period = parse_num(field("period"));
        const std::vector<double> lv = vec("frame_matrix", 16);
        const std::vector<double> av = vec("frame_shift", 4);
        Mat4 l;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) l(r, c) = lv[static_cast<std::size_t>(4 * r + c)];
        const Vec4 a(av[0], av[1], av[2], av[3]);
        if (!l.isIdentity(0.0))
            ml.frame = LorentzTransform::from_matrix(l, a);
        else if (!a.isZero(0.0))
            ml.frame = LorentzTransform::translation(a);
        ml.modes.resize(count);
        for (Mode& m : ml.modes) {
            for (int& k : m.key) k = get_i32(is);
            m.sign = get_i32(is);
            for (int i = 0; i < 4; ++i) m.p[i] = get_f64(is);
            m.weight = get_f64(is);
            for (int i = 0; i < 4; ++i) {
                const double re = get_f64(is);
                m.amp[i] = cplx(re, get_f64(is));
            }
        }
        return ml;
    }
    if (field("kind") != "slice") throw DomainError("state file: unknown kind '" + field("kind") + "'");
    const std::vector<double> y = vec("plane_y", 4), al = vec("plane_alpha", 3), ph = vec("plane_phi", 3);
    const auto params = HyperplaneParams::make(Vec4(y[0], y[1], y[2], y[3]), Vec3(al[0], al[1], al[2]),
                                               Vec3(ph[0], ph[1], ph[2]));
    const HyperplaneGrid grid(params, parse_num(field("grid_radius")), std::stoi(field("grid_n")));
    GridSliceState sl(grid, parse_num(field("mass")), parse_num(field("c")));
    if (count != sl.values.size()) throw DomainError("state file: value count does not match the grid");
    for (cplx& v : sl.values) {
        const double re = get_f64(is);
        v = cplx(re, get_f64(is));
    }
    return sl;
}

void save_state(const std::string& path, const QuantumState& state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DomainError("cannot open '" + path + "' for writing");
    write_state(os, state);
}

QuantumState load_state(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DomainError("cannot open '" + path + "'");
    return read_state(is);
}

}  // namespace releqt
