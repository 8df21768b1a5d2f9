#include <ws3d/config.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <ws3d/errors.hpp>

namespace ws3d {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line)
{
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\'))
            in_string = !in_string;
        else if (line[i] == '#' && !in_string)
            return line.substr(0, i);
    }
    return line;
}

bool parse_number(const std::string& text, TomlValue& out)
{
    std::string s;
    s.reserve(text.size());
    for (char c : text)
        if (c != '_')
            s.push_back(c);
    if (s.empty())
        return false;
    const bool looks_float = s.find_first_of(".eE") != std::string::npos || s == "inf" || s == "nan";
    if (!looks_float) {
        long long v = 0;
        const char* first = s.data() + (s[0] == '+' ? 1 : 0);
        auto [p, ec] = std::from_chars(first, s.data() + s.size(), v);
        if (ec == std::errc() && p == s.data() + s.size()) {
            out = v;
            return true;
        }
        return false;
    }
    std::istringstream is(s);
    double d = 0.0;
    is >> d;
    if (!is.fail() && is.eof()) {
        out = d;
        return true;
    }
    return false;
}

TomlValue parse_value(const std::string& raw, std::size_t line_no)
{
    const std::string v = trim(raw);
    auto fail = [&](const std::string& why) {
        return ConfigError("config line " + std::to_string(line_no) + ": " + why);
    };
    if (v.empty())
        throw fail("missing value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"')
            throw fail("unterminated string");
        std::string s;
        for (std::size_t i = 1; i + 1 < v.size(); ++i) {
            if (v[i] == '\\' && i + 2 < v.size()) {
                const char n = v[++i];
                s.push_back(n == 'n' ? '\n' : n == 't' ? '\t' : n);
            } else {
                s.push_back(v[i]);
            }
        }
        return s;
    }
    if (v == "true")
        return true;
    if (v == "false")
        return false;
    if (v.front() == '[') {
        if (v.back() != ']')
            throw fail("unterminated array");
        std::vector<double> arr;
        std::stringstream ss(v.substr(1, v.size() - 2));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty())
                continue;
            TomlValue n;
            if (!parse_number(item, n))
                throw fail("arrays may only hold numbers");
            arr.push_back(std::holds_alternative<long long>(n) ? static_cast<double>(std::get<long long>(n))
                                                               : std::get<double>(n));
        }
        return arr;
    }
    TomlValue n;
    if (!parse_number(v, n))
        throw fail("cannot parse value '" + v + "'");
    return n;
}

const char* type_name(const TomlValue& v)
{
    switch (v.index()) {
    case 0: return "string";
    case 1: return "integer";
    case 2: return "float";
    case 3: return "boolean";
    default: return "array";
    }
}

} // namespace

TomlDocument TomlDocument::parse(const std::string& text)
{
    TomlDocument doc;
    std::istringstream in(text);
    std::string line, table;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(strip_comment(line));
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw ConfigError("config line " + std::to_string(line_no) + ": malformed table header");
            table = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (key.empty() || !std::all_of(key.begin(), key.end(), [](char c) {
                return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
            }))
            throw ConfigError("config line " + std::to_string(line_no) + ": invalid key '" + key + "'");
        if (!table.empty())
            key = table + "." + key;
        if (doc.m_values.contains(key))
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        doc.m_values[key] = parse_value(line.substr(eq + 1), line_no);
    }
    return doc;
}

TomlDocument TomlDocument::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

double TomlDocument::get_number(const std::string& key, double fallback) const
{
    const auto it = m_values.find(key);
    if (it == m_values.end())
        return fallback;
    if (const auto* d = std::get_if<double>(&it->second))
        return *d;
    if (const auto* i = std::get_if<long long>(&it->second))
        return static_cast<double>(*i);
    throw ConfigError("config key '" + key + "' must be a number, got " + type_name(it->second));
}

long long TomlDocument::get_int(const std::string& key, long long fallback) const
{
    const auto it = m_values.find(key);
    if (it == m_values.end())
        return fallback;
    if (const auto* i = std::get_if<long long>(&it->second))
        return *i;
    throw ConfigError("config key '" + key + "' must be an integer, got " + type_name(it->second));
}

bool TomlDocument::get_bool(const std::string& key, bool fallback) const
{
    const auto it = m_values.find(key);
    if (it == m_values.end())
        return fallback;
    if (const auto* b = std::get_if<bool>(&it->second))
        return *b;
    throw ConfigError("config key '" + key + "' must be a boolean, got " + type_name(it->second));
}

std::string TomlDocument::get_string(const std::string& key, const std::string& fallback) const
{
    const auto it = m_values.find(key);
    if (it == m_values.end())
        return fallback;
    if (const auto* s = std::get_if<std::string>(&it->second))
        return *s;
    throw ConfigError("config key '" + key + "' must be a string, got " + type_name(it->second));
}

std::vector<double> TomlDocument::get_array(const std::string& key, const std::vector<double>& fallback) const
{
    const auto it = m_values.find(key);
    if (it == m_values.end())
        return fallback;
    if (const auto* a = std::get_if<std::vector<double>>(&it->second))
        return *a;
    throw ConfigError("config key '" + key + "' must be an array, got " + type_name(it->second));
}

void TomlDocument::check_keys(const std::vector<std::string>& known) const
{
    for (const auto& [key, _] : m_values)
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown config key '" + key + "'");
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kJawKeys{
    "jaw.num_teeth", "jaw.points_per_tooth", "jaw.gingiva_points", "jaw.arch_radius",
    "jaw.tooth_scale", "jaw.jitter_sigma", "jaw.seed"};

const std::vector<std::string> kTrainKeys{
    "train.epochs", "train.batch_size", "train.learning_rate", "train.weight_decay", "train.seed",
    "train.labels_per_tooth", "train.mask_refresh", "train.prompt_mode", "train.subgroup_cap",
    "train.planted_outliers", "train.planted_confidence",
    "loss.tau", "loss.temperature", "loss.warmup_epochs", "loss.lambda1", "loss.lambda2",
    "loss.lambda3", "loss.coseg_norm",
    "oracle.kind", "oracle.command", "oracle.workdir", "oracle.dilate_px", "oracle.erode_px",
    "oracle.flip_prob", "oracle.seed",
    "render.views", "render.union_views", "render.height", "render.width", "render.splat_radius",
    "network.hidden", "network.embed", "network.conf_hidden", "network.knn"};

std::string fmt(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    std::string s = os.str();
    if (s.find_first_of(".eEn") == std::string::npos)
        s += ".0";
    return s;
}

int to_int(long long v, const char* key)
{
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        throw ConfigError(std::string("config key '") + key + "' out of range");
    return static_cast<int>(v);
}

} // namespace

JawConfig jaw_config_from(const TomlDocument& doc)
{
    std::vector<std::string> known = kJawKeys;
    known.insert(known.end(), kTrainKeys.begin(), kTrainKeys.end());
    doc.check_keys(known);
    JawConfig c;
    c.num_teeth = to_int(doc.get_int("jaw.num_teeth", c.num_teeth), "jaw.num_teeth");
    c.points_per_tooth = to_int(doc.get_int("jaw.points_per_tooth", c.points_per_tooth), "jaw.points_per_tooth");
    c.gingiva_points = to_int(doc.get_int("jaw.gingiva_points", c.gingiva_points), "jaw.gingiva_points");
    c.arch_radius = doc.get_number("jaw.arch_radius", c.arch_radius);
    const auto scale = doc.get_array("jaw.tooth_scale", {c.tooth_scale.x, c.tooth_scale.y, c.tooth_scale.z});
    if (scale.size() != 3)
        throw ConfigError("jaw.tooth_scale must hold three semi-axes");
    c.tooth_scale = {scale[0], scale[1], scale[2]};
    c.jitter_sigma = doc.get_number("jaw.jitter_sigma", c.jitter_sigma);
    c.seed = static_cast<std::uint64_t>(doc.get_int("jaw.seed", static_cast<long long>(c.seed)));
    c.validate();
    return c;
}

TrainConfig train_config_from(const TomlDocument& doc)
{
    std::vector<std::string> known = kTrainKeys;
    known.insert(known.end(), kJawKeys.begin(), kJawKeys.end());
    doc.check_keys(known);
    TrainConfig c;
    c.epochs = to_int(doc.get_int("train.epochs", c.epochs), "train.epochs");
    c.batch_size = to_int(doc.get_int("train.batch_size", c.batch_size), "train.batch_size");
    c.learning_rate = doc.get_number("train.learning_rate", c.learning_rate);
    c.weight_decay = doc.get_number("train.weight_decay", c.weight_decay);
    c.seed = static_cast<std::uint64_t>(doc.get_int("train.seed", static_cast<long long>(c.seed)));
    c.labels_per_tooth = to_int(doc.get_int("train.labels_per_tooth", c.labels_per_tooth), "train.labels_per_tooth");
    c.mask_refresh = to_int(doc.get_int("train.mask_refresh", c.mask_refresh), "train.mask_refresh");
    const std::string mode = doc.get_string("train.prompt_mode", "cpg");
    if (mode != "cpg" && mode != "agg")
        throw ConfigError("train.prompt_mode must be \"cpg\" or \"agg\"");
    c.prompt_mode = mode == "cpg" ? PromptMode::Cpg : PromptMode::Agg;
    c.subgroup_cap = static_cast<std::size_t>(doc.get_int("train.subgroup_cap", static_cast<long long>(c.subgroup_cap)));
    c.planted_outliers = to_int(doc.get_int("train.planted_outliers", c.planted_outliers), "train.planted_outliers");
    c.planted_confidence = doc.get_number("train.planted_confidence", c.planted_confidence);

    c.loss.tau = doc.get_number("loss.tau", c.loss.tau);
    c.loss.temperature = doc.get_number("loss.temperature", c.loss.temperature);
    c.loss.warmup_epochs = to_int(doc.get_int("loss.warmup_epochs", c.loss.warmup_epochs), "loss.warmup_epochs");
    c.loss.lambda1 = doc.get_number("loss.lambda1", c.loss.lambda1);
    c.loss.lambda2 = doc.get_number("loss.lambda2", c.loss.lambda2);
    c.loss.lambda3 = doc.get_number("loss.lambda3", c.loss.lambda3);
    const std::string norm = doc.get_string("loss.coseg_norm", "labeled");
    if (norm != "labeled" && norm != "points")
        throw ConfigError("loss.coseg_norm must be \"labeled\" or \"points\"");
    c.loss.coseg_norm = norm == "labeled" ? CosegNorm::LabeledCount : CosegNorm::PointCount;

    const std::string kind = doc.get_string("oracle.kind", "gt");
    if (kind != "gt" && kind != "external")
        throw ConfigError("oracle.kind must be \"gt\" or \"external\"");
    c.oracle.kind = kind == "gt" ? OracleKind::Gt : OracleKind::External;
    c.oracle.command = doc.get_string("oracle.command", "");
    c.oracle.workdir = doc.get_string("oracle.workdir", "oracle_work");
    c.oracle.noise.dilate_px = to_int(doc.get_int("oracle.dilate_px", 0), "oracle.dilate_px");
    c.oracle.noise.erode_px = to_int(doc.get_int("oracle.erode_px", 0), "oracle.erode_px");
    c.oracle.noise.flip_prob = doc.get_number("oracle.flip_prob", 0.0);
    c.oracle.noise.seed = static_cast<std::uint64_t>(doc.get_int("oracle.seed", 0));

    c.views = to_int(doc.get_int("render.views", c.views), "render.views");
    c.union_views = doc.get_bool("render.union_views", c.union_views);
    c.image_height = to_int(doc.get_int("render.height", c.image_height), "render.height");
    c.image_width = to_int(doc.get_int("render.width", c.image_width), "render.width");
    c.splat_radius = to_int(doc.get_int("render.splat_radius", c.splat_radius), "render.splat_radius");

    c.hidden = to_int(doc.get_int("network.hidden", c.hidden), "network.hidden");
    c.embed = to_int(doc.get_int("network.embed", c.embed), "network.embed");
    c.conf_hidden = to_int(doc.get_int("network.conf_hidden", c.conf_hidden), "network.conf_hidden");
    c.knn = to_int(doc.get_int("network.knn", c.knn), "network.knn");
    c.validate();
    return c;
}

std::string to_toml(const JawConfig& c)
{
    std::ostringstream os;
    os << "[jaw]\n"
       << "num_teeth = " << c.num_teeth << "\n"
       << "points_per_tooth = " << c.points_per_tooth << "\n"
       << "gingiva_points = " << c.gingiva_points << "\n"
       << "arch_radius = " << fmt(c.arch_radius) << "\n"
       << "tooth_scale = [" << fmt(c.tooth_scale.x) << ", " << fmt(c.tooth_scale.y) << ", "
       << fmt(c.tooth_scale.z) << "]\n"
       << "jitter_sigma = " << fmt(c.jitter_sigma) << "\n"
       << "seed = " << c.seed << "\n";
    return os.str();
}

std::string to_toml(const TrainConfig& c)
{
    std::ostringstream os;
    os << "[train]\n"
       << "epochs = " << c.epochs << "\n"
       << "batch_size = " << c.batch_size << "\n"
       << "learning_rate = " << fmt(c.learning_rate) << "\n"
       << "weight_decay = " << fmt(c.weight_decay) << "\n"
       << "seed = " << c.seed << "\n"
       << "labels_per_tooth = " << c.labels_per_tooth << "\n"
       << "mask_refresh = " << c.mask_refresh << "\n"
       << "prompt_mode = \"" << (c.prompt_mode == PromptMode::Cpg ? "cpg" : "agg") << "\"\n"
       << "subgroup_cap = " << c.subgroup_cap << "\n"
       << "planted_outliers = " << c.planted_outliers << "\n"
       << "planted_confidence = " << fmt(c.planted_confidence) << "\n\n"
       << "[loss]\n"
       << "tau = " << fmt(c.loss.tau) << "\n"
       << "temperature = " << fmt(c.loss.temperature) << "\n"
       << "warmup_epochs = " << c.loss.warmup_epochs << "\n"
       << "lambda1 = " << fmt(c.loss.lambda1) << "\n"
       << "lambda2 = " << fmt(c.loss.lambda2) << "\n"
       << "lambda3 = " << fmt(c.loss.lambda3) << "\n"
       << "coseg_norm = \"" << (c.loss.coseg_norm == CosegNorm::LabeledCount ? "labeled" : "points") << "\"\n\n"
       << "[oracle]\n"
       << "kind = \"" << (c.oracle.kind == OracleKind::Gt ? "gt" : "external") << "\"\n"
       << "command = \"" << c.oracle.command << "\"\n"
       << "workdir = \"" << c.oracle.workdir.string() << "\"\n"
       << "dilate_px = " << c.oracle.noise.dilate_px << "\n"
       << "erode_px = " << c.oracle.noise.erode_px << "\n"
       << "flip_prob = " << fmt(c.oracle.noise.flip_prob) << "\n"
       << "seed = " << c.oracle.noise.seed << "\n\n"
       << "[render]\n"
       << "views = " << c.views << "\n"
       << "union_views = " << (c.union_views ? "true" : "false") << "\n"
       << "height = " << c.image_height << "\n"
       << "width = " << c.image_width << "\n"
       << "splat_radius = " << c.splat_radius << "\n\n"
       << "[network]\n"
       << "hidden = " << c.hidden << "\n"
       << "embed = " << c.embed << "\n"
       << "conf_hidden = " << c.conf_hidden << "\n"
       << "knn = " << c.knn << "\n";
    return os.str();
}

} // namespace ws3d
