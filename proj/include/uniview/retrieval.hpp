#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "uniview/image.hpp"

namespace uniview {

enum class Viewpoint { front, back, left, right };

std::string to_string(Viewpoint v);
Viewpoint viewpoint_from_string(const std::string& s);
bool is_canonical_viewpoint(const std::string& s);
// front<->back, left<->right.
Viewpoint complementary_viewpoint(Viewpoint v);
// 0 -> front, 90 -> right, 180 -> back, 270 -> left.
Viewpoint viewpoint_from_azimuth(double azimuth_deg);

struct ImageRecord {
    std::string id;
    std::string category;
    Viewpoint viewpoint = Viewpoint::front;
    int instance = 0;
    std::string path;
};

// Immutable after build; id lists are sorted so retrieval is deterministic.
struct DatabaseIndex {
    std::vector<ImageRecord> records;
    std::map<std::pair<std::string, Viewpoint>, std::vector<std::string>> by_cat_view;
    std::uint64_t manifest_checksum = 0;

    const ImageRecord& by_id(const std::string& id) const;
    std::vector<std::string> categories() const;
};

DatabaseIndex build_index(std::vector<ImageRecord> records);

// Tab-separated lines: id, category, viewpoint, instance, relative path.
void write_manifest(const std::string& path, const std::vector<ImageRecord>& records);
std::vector<ImageRecord> read_manifest(const std::string& path);

struct ClassifierVerdict {
    std::string category;
    Viewpoint viewpoint = Viewpoint::front;
    double confidence = 1.0;
};

struct Classifier {
    virtual ~Classifier() = default;
    virtual ClassifierVerdict classify(const Image& img) const = 0;
};

// Looks the image up by content fingerprint in a key table written by the
// generators; stands in for a multimodal model in tests and offline runs.
struct StubClassifier : Classifier {
    std::map<std::uint64_t, ClassifierVerdict> key;

    ClassifierVerdict classify(const Image& img) const override;

    static StubClassifier load(const std::string& path);
};

// Always returns the same verdict (user-supplied category/viewpoint).
struct FixedClassifier : Classifier {
    ClassifierVerdict verdict;

    explicit FixedClassifier(ClassifierVerdict v) : verdict(std::move(v)) {}
    ClassifierVerdict classify(const Image&) const override { return verdict; }
};

// HTTP client: POST {"image": base64 RGB bytes, "prompt": fixed text} to the
// configured endpoint, expects {"category","viewpoint","confidence"}.
struct RemoteClassifier : Classifier {
    std::string endpoint;  // e.g. http://127.0.0.1:8080/classify
    int timeout_ms = 2000;
    int retries = 2;

    ClassifierVerdict classify(const Image& img) const override;

    // Reads RETRIEVAL_ENDPOINT and RETRIEVAL_TIMEOUT_MS.
    static RemoteClassifier from_environment();
};

// Content fingerprint over the 8-bit quantized pixels; stable across a PNG
// round trip.
std::uint64_t fingerprint_image(const Image& img);

void save_stub_key(const std::string& path,
                   const std::map<std::uint64_t, ClassifierVerdict>& key);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

std::size_t edit_distance(const std::string& a, const std::string& b);
// Nearest category by edit distance, ties broken lexicographically.
std::string snap_category(const std::string& predicted,
                          const std::vector<std::string>& available);

// Raw client verdict, canonicalized: category snapped onto the index's label
// set when absent.
ClassifierVerdict classify(const Image& I_c, const Classifier& client,
                           const std::vector<std::string>& db_categories);

struct RetrievalOptions {
    bool random_pick = false;  // default: lowest sorted id
    std::uint64_t seed = 0;
};

ImageRecord retrieve_reference(const Image& I_c, const DatabaseIndex& idx,
                               const Classifier& client,
                               const RetrievalOptions& opts = {});

}  // namespace uniview
