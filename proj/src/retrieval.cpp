#include "uniview/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "uniview/errors.hpp"
#include "uniview/rng.hpp"

namespace uniview {

std::string to_string(Viewpoint v) {
    switch (v) {
        case Viewpoint::front: return "front";
        case Viewpoint::back: return "back";
        case Viewpoint::left: return "left";
        case Viewpoint::right: return "right";
    }
    throw ConfigError("unknown viewpoint value");
}

Viewpoint viewpoint_from_string(const std::string& s) {
    if (s == "front") return Viewpoint::front;
    if (s == "back") return Viewpoint::back;
    if (s == "left") return Viewpoint::left;
    if (s == "right") return Viewpoint::right;
    throw ConfigError("non-canonical viewpoint: " + s);
}

bool is_canonical_viewpoint(const std::string& s) {
    return s == "front" || s == "back" || s == "left" || s == "right";
}

Viewpoint complementary_viewpoint(Viewpoint v) {
    switch (v) {
        case Viewpoint::front: return Viewpoint::back;
        case Viewpoint::back: return Viewpoint::front;
        case Viewpoint::left: return Viewpoint::right;
        case Viewpoint::right: return Viewpoint::left;
    }
    throw ConfigError("unknown viewpoint value");
}

Viewpoint viewpoint_from_azimuth(double azimuth_deg) {
    double a = std::fmod(azimuth_deg, 360.0);
    if (a < 0.0) a += 360.0;
    if (a == 0.0) return Viewpoint::front;
    if (a == 90.0) return Viewpoint::right;
    if (a == 180.0) return Viewpoint::back;
    if (a == 270.0) return Viewpoint::left;
    throw ConfigError("azimuth has no canonical viewpoint label");
}

const ImageRecord& DatabaseIndex::by_id(const std::string& id) const {
    for (const auto& r : records)
        if (r.id == id) return r;
    throw IntegrityError("index: unknown record id " + id);
}

std::vector<std::string> DatabaseIndex::categories() const {
    std::set<std::string> cats;
    for (const auto& r : records) cats.insert(r.category);
    return {cats.begin(), cats.end()};
}

namespace {

std::string manifest_line(const ImageRecord& r) {
    return r.id + "\t" + r.category + "\t" + to_string(r.viewpoint) + "\t" +
           std::to_string(r.instance) + "\t" + r.path;
}

}  // namespace

DatabaseIndex build_index(std::vector<ImageRecord> records) {
    std::set<std::tuple<std::string, int, Viewpoint>> keys;
    std::set<std::string> ids;
    for (const auto& r : records) {
        if (!keys.insert({r.category, r.instance, r.viewpoint}).second)
            throw IntegrityError("duplicate (category, instance, viewpoint): " + r.category +
                                 "/" + std::to_string(r.instance) + "/" +
                                 to_string(r.viewpoint));
        if (!ids.insert(r.id).second) throw IntegrityError("duplicate record id: " + r.id);
    }

    DatabaseIndex idx;
    idx.records = std::move(records);
    for (const auto& r : idx.records)
        idx.by_cat_view[{r.category, r.viewpoint}].push_back(r.id);
    for (auto& [_, list] : idx.by_cat_view) std::sort(list.begin(), list.end());

    std::vector<std::string> lines;
    lines.reserve(idx.records.size());
    for (const auto& r : idx.records) lines.push_back(manifest_line(r));
    std::sort(lines.begin(), lines.end());
    std::string joined;
    for (const auto& l : lines) {
        joined += l;
        joined += '\n';
    }
    idx.manifest_checksum = fnv1a64(joined);
    return idx;
}

void write_manifest(const std::string& path, const std::vector<ImageRecord>& records) {
    std::vector<std::string> lines;
    lines.reserve(records.size());
    for (const auto& r : records) lines.push_back(manifest_line(r));
    std::sort(lines.begin(), lines.end());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open manifest for writing: " + path);
    for (const auto& l : lines) out << l << '\n';
    if (!out) throw IoError("manifest write failed: " + path);
}

std::vector<ImageRecord> read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest: " + path);
    std::vector<ImageRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() != 5)
            throw IoError("manifest " + path + ": line " + std::to_string(lineno) +
                          " has " + std::to_string(cols.size()) + " fields, want 5");
        ImageRecord r;
        r.id = cols[0];
        r.category = cols[1];
        if (!is_canonical_viewpoint(cols[2]))
            throw IoError("manifest " + path + ": line " + std::to_string(lineno) +
                          " has non-canonical viewpoint " + cols[2]);
        r.viewpoint = viewpoint_from_string(cols[2]);
        try {
            r.instance = std::stoi(cols[3]);
        } catch (const std::exception&) {
            throw IoError("manifest " + path + ": line " + std::to_string(lineno) +
                          " has a non-integer instance field");
        }
        r.path = cols[4];
        records.push_back(std::move(r));
    }
    return records;
}

std::uint64_t fingerprint_image(const Image& img) {
    std::string bytes;
    bytes.reserve(img.pixels.size());
    for (double v : img.pixels) {
        const double c = std::clamp(v, 0.0, 1.0);
        bytes.push_back(static_cast<char>(
            static_cast<unsigned char>(std::lround(c * 255.0))));
    }
    return fnv1a64(bytes);
}

ClassifierVerdict StubClassifier::classify(const Image& img) const {
    auto it = key.find(fingerprint_image(img));
    if (it == key.end())
        throw RetrievalError("stub classifier: image not present in the key table");
    return it->second;
}

namespace {

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace

void save_stub_key(const std::string& path,
                   const std::map<std::uint64_t, ClassifierVerdict>& key) {
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [fp, v] : key) {
        entries[hex64(fp)] = {{"category", v.category},
                              {"viewpoint", to_string(v.viewpoint)},
                              {"confidence", v.confidence}};
    }
    nlohmann::json doc = {{"format_version", 1}, {"entries", entries}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open stub key for writing: " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("stub key write failed: " + path);
}

StubClassifier StubClassifier::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open stub key: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("stub key " + path + " is not valid JSON: " + e.what());
    }
    StubClassifier stub;
    try {
        for (const auto& [hex, v] : doc.at("entries").items()) {
            ClassifierVerdict verdict;
            verdict.category = v.at("category").get<std::string>();
            verdict.viewpoint = viewpoint_from_string(v.at("viewpoint").get<std::string>());
            verdict.confidence = v.at("confidence").get<double>();
            stub.key[std::stoull(hex, nullptr, 16)] = std::move(verdict);
        }
    } catch (const std::exception& e) {
        throw IoError("stub key " + path + " is malformed: " + e.what());
    }
    return stub;
}

namespace {

constexpr char kB64Table[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t chunk = static_cast<std::uint32_t>(bytes[i]) << 16;
        const std::size_t rem = bytes.size() - i;
        if (rem > 1) chunk |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
        if (rem > 2) chunk |= bytes[i + 2];
        out.push_back(kB64Table[(chunk >> 18) & 0x3f]);
        out.push_back(kB64Table[(chunk >> 12) & 0x3f]);
        out.push_back(rem > 1 ? kB64Table[(chunk >> 6) & 0x3f] : '=');
        out.push_back(rem > 2 ? kB64Table[chunk & 0x3f] : '=');
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (text.size() % 4 != 0) throw IoError("base64: length not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            const char c = text[i + static_cast<std::size_t>(j)];
            if (c == '=' && i + 4 == text.size() && j >= 2) {
                vals[j] = 0;
                ++pad;
            } else {
                vals[j] = value_of(c);
                if (vals[j] < 0 || pad > 0) throw IoError("base64: invalid character");
            }
        }
        const std::uint32_t chunk =
            (static_cast<std::uint32_t>(vals[0]) << 18) |
            (static_cast<std::uint32_t>(vals[1]) << 12) |
            (static_cast<std::uint32_t>(vals[2]) << 6) |
            static_cast<std::uint32_t>(vals[3]);
        out.push_back(static_cast<std::uint8_t>((chunk >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>((chunk >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(chunk & 0xff));
    }
    return out;
}

namespace {

constexpr const char* kClassifierPrompt =
    "Identify the object category and the closest canonical viewpoint "
    "(front, back, left, right) of the pictured object. Respond with JSON "
    "{\"category\": string, \"viewpoint\": string, \"confidence\": number}.";

std::vector<std::uint8_t> interleaved_rgb8(const Image& img) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(static_cast<std::size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                bytes.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
            }
    return bytes;
}

ClassifierVerdict parse_remote_verdict(const std::string& body) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        throw ProtocolError("remote classifier returned invalid JSON", body);
    }
    ClassifierVerdict v;
    if (!doc.is_object() || !doc.contains("category") || !doc["category"].is_string() ||
        !doc.contains("viewpoint") || !doc["viewpoint"].is_string())
        throw ProtocolError("remote classifier response missing category/viewpoint", body);
    v.category = doc["category"].get<std::string>();
    const std::string view = doc["viewpoint"].get<std::string>();
    if (v.category.empty()) throw ProtocolError("remote classifier: empty category", body);
    if (!is_canonical_viewpoint(view))
        throw ProtocolError("remote classifier: non-canonical viewpoint " + view, body);
    v.viewpoint = viewpoint_from_string(view);
    if (doc.contains("confidence")) {
        if (!doc["confidence"].is_number())
            throw ProtocolError("remote classifier: non-numeric confidence", body);
        v.confidence = doc["confidence"].get<double>();
        if (!(v.confidence >= 0.0 && v.confidence <= 1.0))
            throw ProtocolError("remote classifier: confidence outside [0,1]", body);
    }
    return v;
}

}  // namespace

ClassifierVerdict RemoteClassifier::classify(const Image& img) const {
    const std::size_t scheme = endpoint.find("://");
    if (scheme == std::string::npos)
        throw ConfigError("remote endpoint must be a full URL: " + endpoint);
    const std::size_t path_at = endpoint.find('/', scheme + 3);
    const std::string base =
        path_at == std::string::npos ? endpoint : endpoint.substr(0, path_at);
    const std::string route =
        path_at == std::string::npos ? "/classify" : endpoint.substr(path_at);

    const nlohmann::json req = {{"image", base64_encode(interleaved_rgb8(img))},
                                {"prompt", kClassifierPrompt}};
    const std::string body = req.dump();

    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= retries; ++attempt) {
        httplib::Client cli(base);
        cli.set_connection_timeout(0, timeout_ms * 1000);
        cli.set_read_timeout(0, timeout_ms * 1000);
        cli.set_write_timeout(0, timeout_ms * 1000);
        auto res = cli.Post(route, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200)
            throw ProtocolError("remote classifier HTTP " + std::to_string(res->status),
                                res->body);
        return parse_remote_verdict(res->body);
    }
    throw RetrievalError("remote classifier unreachable after " +
                         std::to_string(retries + 1) + " attempts: " + last_error);
}

RemoteClassifier RemoteClassifier::from_environment() {
    RemoteClassifier rc;
    const char* ep = std::getenv("RETRIEVAL_ENDPOINT");
    if (ep == nullptr || *ep == '\0')
        throw ConfigError("RETRIEVAL_ENDPOINT is not set");
    rc.endpoint = ep;
    if (const char* ms = std::getenv("RETRIEVAL_TIMEOUT_MS"); ms != nullptr && *ms != '\0') {
        try {
            rc.timeout_ms = std::stoi(ms);
        } catch (const std::exception&) {
            throw ConfigError("RETRIEVAL_TIMEOUT_MS is not an integer");
        }
        if (rc.timeout_ms <= 0) throw ConfigError("RETRIEVAL_TIMEOUT_MS must be positive");
    }
    return rc;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            const std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, sub});
            diag = up;
        }
    }
    return row[b.size()];
}

std::string snap_category(const std::string& predicted,
                          const std::vector<std::string>& available) {
    if (available.empty()) throw RetrievalError("snap_category: no categories available");
    std::string best;
    std::size_t best_dist = 0;
    bool first = true;
    for (const auto& cat : available) {
        const std::size_t d = edit_distance(predicted, cat);
        if (first || d < best_dist || (d == best_dist && cat < best)) {
            best = cat;
            best_dist = d;
            first = false;
        }
    }
    return best;
}

ClassifierVerdict classify(const Image& I_c, const Classifier& client,
                           const std::vector<std::string>& db_categories) {
    ClassifierVerdict v = client.classify(I_c);
    if (v.category.empty()) throw ProtocolError("classifier returned an empty category", "");
    if (!db_categories.empty() &&
        std::find(db_categories.begin(), db_categories.end(), v.category) ==
            db_categories.end())
        v.category = snap_category(v.category, db_categories);
    return v;
}

ImageRecord retrieve_reference(const Image& I_c, const DatabaseIndex& idx,
                               const Classifier& client, const RetrievalOptions& opts) {
    if (idx.records.empty()) throw RetrievalError("retrieve_reference: empty database");
    const ClassifierVerdict v = classify(I_c, client, idx.categories());
    const Viewpoint want = complementary_viewpoint(v.viewpoint);
    const auto it = idx.by_cat_view.find({v.category, want});
    if (it == idx.by_cat_view.end() || it->second.empty())
        throw RetrievalError("no " + v.category + "/" + to_string(want) +
                             " record in the database");
    const auto& bucket = it->second;
    if (!opts.random_pick) return idx.by_id(bucket.front());
    Rng rng = substream(opts.seed, "reference-choice");
    const auto pick = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(bucket.size())));
    return idx.by_id(bucket[pick]);
}

}  // namespace uniview
