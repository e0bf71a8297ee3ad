// Experiment configuration: flat "section.key = value" text with '#'
// comments. Vectors are whitespace separated; sinusoid terms are
// "amplitude frequency phase" triples separated by ';'.
#pragma once

#include "bias_obs/camera_kinematics.hpp"
#include "bias_obs/observer_core.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace bias_obs {

struct SimConfig {
    struct SceneBlock {
        std::string type = "room"; // room | sphere
        Vec3 size = Vec3(4.0, 3.0, 2.5);
        double amplitude = 100.0;
        double freq_h = 0.5;
        double freq_v = 0.5;
        double radius = 1.5; // sphere scenes
    } scene;
    struct GridBlock {
        std::size_t width = 160;
        std::size_t height = 120;
        double fov_h = 50.0; // deg
        double fov_v = 40.0; // deg
        double rate = 42.0;  // Hz
        std::size_t n_theta = 64; // full-sphere observer grid (n_phi = 2 n_theta)
    } grid;
    struct CameraBlock {
        Vec3 position = Vec3(0.5, 0.0, 0.0);
        Vec3 forward = Vec3::UnitX();
        Vec3 up = Vec3::UnitZ();
        double envelope = 0.5; // half-width of the box the centre must stay in, m
    } camera;
    TrajectoryProfile trajectory = default_trajectory();
    BiasPair bias{Vec3(2.5, 0.0, 0.0), Vec3(0.05, 0.0, 0.0)};
    NoiseSpec noise;
    ObserverGains gains;
    struct WindowBlock {
        double k1 = 0.16; // plateau starts, fraction of the frame
        double k2 = 0.08; // window vanishes up to, fraction of the frame
    } window;
    struct RunBlock {
        std::string observer = "cap"; // cap | sphere
        std::string transport = "upwind"; // upwind | chart
        double cfl_max = 0.5;
        std::size_t dump_every = 0; // PFM error dumps every N frames, 0 = off
        std::string output = "out";
    } run;
};

namespace detail {

/// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string fmt(const Vec3& v) { return fmt(v.x()) + " " + fmt(v.y()) + " " + fmt(v.z()); }

inline std::string fmt(const std::vector<SinTerm>& terms) {
    std::string out;
    for (const auto& t : terms) {
        if (!out.empty()) out += "; ";
        out += fmt(t.amplitude) + " " + fmt(t.frequency) + " " + fmt(t.phase);
    }
    return out;
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<double> numbers(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::istringstream in(value);
    std::string tok;
    while (in >> tok) {
        double d = 0.0;
        const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), d);
        if (ec != std::errc() || p != tok.data() + tok.size()) {
            throw BadConfig("'" + key + "': '" + tok + "' is not a number");
        }
        out.push_back(d);
    }
    return out;
}

inline double number(const std::string& key, const std::string& value) {
    const auto v = numbers(key, value);
    if (v.size() != 1) throw BadConfig("'" + key + "' expects one number");
    return v[0];
}

inline std::size_t count(const std::string& key, const std::string& value) {
    const double d = number(key, value);
    if (!(d >= 0.0) || d != std::floor(d) || d > 1e9) throw BadConfig("'" + key + "' expects a non-negative integer");
    return static_cast<std::size_t>(d);
}

inline Vec3 vec3(const std::string& key, const std::string& value) {
    const auto v = numbers(key, value);
    if (v.size() != 3) throw BadConfig("'" + key + "' expects three numbers");
    return {v[0], v[1], v[2]};
}

inline std::vector<SinTerm> terms(const std::string& key, const std::string& value) {
    std::vector<SinTerm> out;
    std::istringstream in(value);
    std::string part;
    while (std::getline(in, part, ';')) {
        if (trim(part).empty()) continue;
        const auto v = numbers(key, part);
        if (v.size() != 3) throw BadConfig("'" + key + "' terms are 'amplitude frequency phase'");
        out.push_back({v[0], v[1], v[2]});
    }
    return out;
}

/// One accessor per key: read into the config and write back out.
struct Field {
    std::function<void(SimConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const SimConfig&)> get;
};

inline const std::vector<std::pair<std::string, Field>>& config_fields() {
    static const std::vector<std::pair<std::string, Field>> fields = [] {
        std::vector<std::pair<std::string, Field>> f;
        auto real = [&](const char* key, auto member) {
            f.push_back({key, {[member](SimConfig& c, const std::string& k, const std::string& v) { member(c) = number(k, v); },
                               [member](const SimConfig& c) { return fmt(member(c)); }}});
        };
        auto whole = [&](const char* key, auto member) {
            f.push_back({key, {[member](SimConfig& c, const std::string& k, const std::string& v) { member(c) = count(k, v); },
                               [member](const SimConfig& c) {
                                   return std::to_string(member(c));
                               }}});
        };
        auto vec = [&](const char* key, auto member) {
            f.push_back({key, {[member](SimConfig& c, const std::string& k, const std::string& v) { member(c) = vec3(k, v); },
                               [member](const SimConfig& c) { return fmt(member(c)); }}});
        };
        auto word = [&](const char* key, auto member, std::initializer_list<const char*> allowed) {
            std::vector<std::string> keep(allowed.begin(), allowed.end());
            f.push_back({key, {[member, keep](SimConfig& c, const std::string& k, const std::string& v) {
                                   for (const auto& a : keep) {
                                       if (v == a) {
                                           member(c) = v;
                                           return;
                                       }
                                   }
                                   if (!keep.empty()) throw BadConfig("'" + k + "' has unsupported value '" + v + "'");
                                   member(c) = v;
                               },
                               [member](const SimConfig& c) { return member(c); }}});
        };
        auto sines = [&](std::string key, bool linear, int axis) {
            f.push_back({key, {[linear, axis](SimConfig& c, const std::string& k, const std::string& v) {
                                   (linear ? c.trajectory.v : c.trajectory.w)[axis] = terms(k, v);
                               },
                               [linear, axis](const SimConfig& c) {
                                   return fmt((linear ? c.trajectory.v : c.trajectory.w)[axis]);
                               }}});
        };
        word("scene.type", [](auto& c) -> auto& { return c.scene.type; }, {"room", "sphere"});
        vec("scene.size", [](auto& c) -> auto& { return c.scene.size; });
        real("scene.amplitude", [](auto& c) -> auto& { return c.scene.amplitude; });
        real("scene.freq_h", [](auto& c) -> auto& { return c.scene.freq_h; });
        real("scene.freq_v", [](auto& c) -> auto& { return c.scene.freq_v; });
        real("scene.radius", [](auto& c) -> auto& { return c.scene.radius; });
        whole("grid.width", [](auto& c) -> auto& { return c.grid.width; });
        whole("grid.height", [](auto& c) -> auto& { return c.grid.height; });
        real("grid.fov_h", [](auto& c) -> auto& { return c.grid.fov_h; });
        real("grid.fov_v", [](auto& c) -> auto& { return c.grid.fov_v; });
        real("grid.rate", [](auto& c) -> auto& { return c.grid.rate; });
        whole("grid.n_theta", [](auto& c) -> auto& { return c.grid.n_theta; });
        vec("camera.position", [](auto& c) -> auto& { return c.camera.position; });
        vec("camera.forward", [](auto& c) -> auto& { return c.camera.forward; });
        vec("camera.up", [](auto& c) -> auto& { return c.camera.up; });
        real("camera.envelope", [](auto& c) -> auto& { return c.camera.envelope; });
        real("trajectory.duration", [](auto& c) -> auto& { return c.trajectory.duration; });
        real("trajectory.v_cap", [](auto& c) -> auto& { return c.trajectory.v_cap; });
        real("trajectory.w_cap", [](auto& c) -> auto& { return c.trajectory.w_cap; });
        const char* axes = "xyz";
        for (int a = 0; a < 3; ++a) sines(std::string("trajectory.v_") + axes[a], true, a);
        for (int a = 0; a < 3; ++a) sines(std::string("trajectory.w_") + axes[a], false, a);
        vec("bias.p_v", [](auto& c) -> auto& { return c.bias.p_v; });
        vec("bias.p_w", [](auto& c) -> auto& { return c.bias.p_w; });
        real("noise.sigma_y", [](auto& c) -> auto& { return c.noise.sigma_y; });
        real("noise.sigma_D", [](auto& c) -> auto& { return c.noise.sigma_D; });
        real("noise.sigma_v", [](auto& c) -> auto& { return c.noise.sigma_v; });
        real("noise.sigma_w", [](auto& c) -> auto& { return c.noise.sigma_w; });
        f.push_back({"noise.seed", {[](SimConfig& c, const std::string& k, const std::string& v) {
                                        std::uint64_t s = 0;
                                        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
                                        if (ec != std::errc() || p != v.data() + v.size()) {
                                            throw BadConfig("'" + k + "' expects an unsigned integer");
                                        }
                                        c.noise.seed = s;
                                    },
                                    [](const SimConfig& c) { return std::to_string(c.noise.seed); }}});
        real("gains.k_y", [](auto& c) -> auto& { return c.gains.k_y; });
        real("gains.k_D", [](auto& c) -> auto& { return c.gains.k_D; });
        real("gains.k_v", [](auto& c) -> auto& { return c.gains.k_v; });
        real("gains.k_w", [](auto& c) -> auto& { return c.gains.k_w; });
        real("gains.lambda_y", [](auto& c) -> auto& { return c.gains.lambda_y; });
        real("gains.lambda_D", [](auto& c) -> auto& { return c.gains.lambda_D; });
        real("window.k1", [](auto& c) -> auto& { return c.window.k1; });
        real("window.k2", [](auto& c) -> auto& { return c.window.k2; });
        word("run.observer", [](auto& c) -> auto& { return c.run.observer; }, {"cap", "sphere"});
        word("run.transport", [](auto& c) -> auto& { return c.run.transport; }, {"upwind", "chart"});
        real("run.cfl_max", [](auto& c) -> auto& { return c.run.cfl_max; });
        whole("run.dump_every", [](auto& c) -> auto& { return c.run.dump_every; });
        word("run.output", [](auto& c) -> auto& { return c.run.output; }, {});
        return f;
    }();
    return fields;
}

} // namespace detail

/// Range checks beyond what parsing enforces.
inline void validate(const SimConfig& c) {
    auto positive = [](double v, const char* what) {
        if (!(v > 0.0) || !std::isfinite(v)) throw BadConfig(std::string(what) + " must be positive");
    };
    for (int a = 0; a < 3; ++a) positive(c.scene.size[a], "scene.size");
    positive(c.scene.freq_h, "scene.freq_h");
    positive(c.scene.freq_v, "scene.freq_v");
    positive(c.scene.radius, "scene.radius");
    if (!(std::abs(c.scene.amplitude) <= 127.5)) throw BadConfig("scene.amplitude must not exceed 127.5");
    if (c.grid.width < 3 || c.grid.height < 3) throw BadConfig("grid needs at least 3x3 pixels");
    if (c.grid.n_theta < 4) throw BadConfig("grid.n_theta must be at least 4");
    positive(c.grid.fov_h, "grid.fov_h");
    positive(c.grid.fov_v, "grid.fov_v");
    if (c.grid.fov_h >= 180.0 || c.grid.fov_v >= 180.0) throw BadConfig("field of view must be below 180 deg");
    positive(c.grid.rate, "grid.rate");
    positive(c.camera.envelope, "camera.envelope");
    for (double s : {c.noise.sigma_y, c.noise.sigma_D, c.noise.sigma_v, c.noise.sigma_w}) {
        if (!(s >= 0.0)) throw BadConfig("noise levels must be non-negative");
    }
    if (!(c.window.k2 > 0.0 && c.window.k1 > c.window.k2 && c.window.k1 < 0.5)) {
        throw BadConfig("window needs 0 < k2 < k1 < 0.5");
    }
    positive(c.run.cfl_max, "run.cfl_max");
    if (!c.bias.p_v.allFinite() || !c.bias.p_w.allFinite()) throw BadConfig("biases must be finite");
    TrajectoryProfile p = c.trajectory;
    p.rate = c.grid.rate;
    validate(p);
    validate(c.gains);
}

inline SimConfig parse_config(std::istream& in, const std::string& origin = "config") {
    SimConfig c;
    std::map<std::string, const detail::Field*> lookup;
    for (const auto& [k, f] : detail::config_fields()) lookup[k] = &f;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        if (detail::trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw BadConfig(origin + ":" + std::to_string(n) + ": expected 'key = value'");
        const std::string key = detail::trim(std::string_view(line).substr(0, eq));
        const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
        const auto it = lookup.find(key);
        if (it == lookup.end()) throw BadConfig(origin + ":" + std::to_string(n) + ": unknown key '" + key + "'");
        try {
            it->second->set(c, key, value);
        } catch (const BadConfig& e) {
            throw BadConfig(origin + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    c.trajectory.rate = c.grid.rate;
    validate(c);
    return c;
}

inline SimConfig parse_config_string(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline SimConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw BadConfig("cannot read config " + path.string());
    return parse_config(in, path.string());
}

/// Every key, in a fixed order, with round-trip exact numbers.
inline std::string serialize(const SimConfig& c) {
    std::string out;
    std::string section;
    for (const auto& [k, f] : detail::config_fields()) {
        const std::string s = k.substr(0, k.find('.'));
        if (s != section) {
            if (!section.empty()) out += "\n";
            section = s;
        }
        out += k + " = " + f.get(c) + "\n";
    }
    return out;
}

inline bool operator==(const SimConfig& a, const SimConfig& b) { return serialize(a) == serialize(b); }

} // namespace bias_obs
