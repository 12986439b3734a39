#include "zerosight/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace zerosight {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' needs a number, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        unsigned long long u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' needs a non-negative integer, got '" + v +
                          "'");
    }
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("config: key '" + key + "' needs true|false, got '" + v + "'");
}

std::vector<std::size_t> parse_widths(const std::string& v, const std::string& key) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("config: key '" + key + "' has an empty entry");
        out.push_back(static_cast<std::size_t>(parse_u64(item, key)));
    }
    if (out.empty()) throw ConfigError("config: key '" + key + "' must list at least one width");
    return out;
}

std::string widths_str(const std::vector<std::size_t>& widths) {
    std::string s;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(widths[i]);
    }
    return s;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string RunConfig::serialize() const {
    std::ostringstream os;
    os << "data_dir = " << data_dir << "\n";
    os << "out_dir = " << out_dir << "\n";
    os << "image_size = " << image_size << "\n";
    os << "widths = " << widths_str(widths) << "\n";
    os << "blocks_per_stage = " << blocks_per_stage << "\n";
    os << "placement = " << placement_name(placement) << "\n";
    os << "use_input_attention = " << (use_input_attention ? "true" : "false") << "\n";
    os << "use_separation_norm = " << (use_separation_norm ? "true" : "false") << "\n";
    os << "cbam_reduction = " << cbam_reduction << "\n";
    os << "epochs = " << epochs << "\n";
    os << "batch_classes = " << batch_classes << "\n";
    os << "batch_per_class = " << batch_per_class << "\n";
    os << "mode = " << split_mode_name(mode) << "\n";
    os << "seed_init = " << seed_init << "\n";
    os << "seed_data = " << seed_data << "\n";
    os << "seed_kmeans = " << seed_kmeans << "\n";
    os << "lr = " << fmt_double(lr) << "\n";
    os << "weight_decay = " << fmt_double(weight_decay) << "\n";
    os << "lr_gamma = " << fmt_double(lr_gamma) << "\n";
    os << "lambda_proxy = " << fmt_double(lambda_proxy) << "\n";
    os << "lambda_softmax = " << fmt_double(lambda_softmax) << "\n";
    os << "normalize_targets = " << (normalize_targets ? "true" : "false") << "\n";
    return os.str();
}

std::uint64_t RunConfig::config_hash() const {
    // out_dir names where results go, not what ran; identical runs that only
    // differ in destination hash the same
    std::istringstream is(serialize());
    std::ostringstream hashed;
    std::string line;
    while (std::getline(is, line))
        if (line.rfind("out_dir = ", 0) != 0) hashed << line << "\n";
    return fnv1a64(hashed.str());
}

std::string RunConfig::config_hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(config_hash()));
    return std::string(buf);
}

RunConfig parse_config_text(const std::string& text, const std::string& what) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, bool> seen;
    while (std::getline(is, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(what + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError(what + ":" + std::to_string(line_no) + ": empty key");
        if (seen[key])
            throw ConfigError(what + ":" + std::to_string(line_no) + ": duplicate key '" + key +
                              "'");
        seen[key] = true;

        if (key == "data_dir") cfg.data_dir = value;
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "image_size") cfg.image_size = parse_u64(value, key);
        else if (key == "widths") cfg.widths = parse_widths(value, key);
        else if (key == "blocks_per_stage") cfg.blocks_per_stage = parse_u64(value, key);
        else if (key == "placement") cfg.placement = placement_from(value);
        else if (key == "use_input_attention") cfg.use_input_attention = parse_bool(value, key);
        else if (key == "use_separation_norm") cfg.use_separation_norm = parse_bool(value, key);
        else if (key == "cbam_reduction") cfg.cbam_reduction = parse_u64(value, key);
        else if (key == "epochs") cfg.epochs = parse_u64(value, key);
        else if (key == "batch_classes") cfg.batch_classes = parse_u64(value, key);
        else if (key == "batch_per_class") cfg.batch_per_class = parse_u64(value, key);
        else if (key == "mode") cfg.mode = split_mode_from(value);
        else if (key == "seed_init") cfg.seed_init = parse_u64(value, key);
        else if (key == "seed_data") cfg.seed_data = parse_u64(value, key);
        else if (key == "seed_kmeans") cfg.seed_kmeans = parse_u64(value, key);
        else if (key == "lr") cfg.lr = parse_double(value, key);
        else if (key == "weight_decay") cfg.weight_decay = parse_double(value, key);
        else if (key == "lr_gamma") cfg.lr_gamma = parse_double(value, key);
        else if (key == "lambda_proxy") cfg.lambda_proxy = parse_double(value, key);
        else if (key == "lambda_softmax") cfg.lambda_softmax = parse_double(value, key);
        else if (key == "normalize_targets") cfg.normalize_targets = parse_bool(value, key);
        else
            throw ConfigError(what + ":" + std::to_string(line_no) + ": unknown key '" + key +
                              "'");
    }
    if (cfg.epochs == 0) throw ConfigError(what + ": epochs must be >= 1");
    if (cfg.batch_classes < 2)
        throw ConfigError(what + ": batch_classes must be >= 2 so every batch has proxy "
                          "negatives");
    if (cfg.batch_per_class == 0) throw ConfigError(what + ": batch_per_class must be >= 1");
    if (cfg.lr <= 0.0 || cfg.lr_gamma <= 0.0)
        throw ConfigError(what + ": lr and lr_gamma must be positive");
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), path);
}

}  // namespace zerosight
