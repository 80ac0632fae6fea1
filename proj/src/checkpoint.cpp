#include "uniview/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "uniview/errors.hpp"

namespace uniview {

namespace {

constexpr const char* kMagic = "uniview-checkpoint";
constexpr int kFormatVersion = 1;

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

void write_le_f32(std::ostream& out, const std::vector<float>& vals) {
    for (float f : vals) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, sizeof bits);
        char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                     static_cast<char>((bits >> 16) & 0xff),
                     static_cast<char>((bits >> 24) & 0xff)};
        out.write(b, 4);
    }
}

std::vector<float> read_le_f32(std::istream& in, std::size_t count) {
    std::vector<float> vals(count);
    for (std::size_t i = 0; i < count; ++i) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw IoError("checkpoint: truncated parameter block");
        const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                                   (static_cast<std::uint32_t>(b[1]) << 8) |
                                   (static_cast<std::uint32_t>(b[2]) << 16) |
                                   (static_cast<std::uint32_t>(b[3]) << 24);
        float f;
        std::memcpy(&f, &bits, sizeof f);
        vals[i] = f;
    }
    return vals;
}

void write_section(std::ostream& out,
                   const std::vector<std::pair<std::string, TensorPtr>>& items) {
    out << "tensors " << items.size() << "\n";
    for (const auto& [name, t] : items) {
        out << name << " " << t->shape.size();
        for (auto d : t->shape) out << " " << d;
        out << "\n";
    }
    out << "end-header\n";
    for (const auto& [_, t] : items) write_le_f32(out, to_f32(*t));
}

void read_section(std::istream& in,
                  const std::vector<std::pair<std::string, TensorPtr>>& items,
                  const std::string& section) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("checkpoint: missing " + section + " header");
    std::istringstream hdr(line);
    std::string word;
    std::size_t count = 0;
    hdr >> word >> count;
    if (word != "tensors" || hdr.fail())
        throw IoError("checkpoint: malformed tensor count in " + section);
    if (count != items.size())
        throw IntegrityError("checkpoint: " + section + " holds " + std::to_string(count) +
                             " tensors, model expects " + std::to_string(items.size()));
    for (const auto& [name, t] : items) {
        if (!std::getline(in, line)) throw IoError("checkpoint: truncated " + section);
        std::istringstream ls(line);
        std::string got_name;
        std::size_t ndims = 0;
        ls >> got_name >> ndims;
        if (ls.fail() || got_name != name)
            throw IntegrityError("checkpoint: expected tensor " + name + ", found line '" +
                                 line + "'");
        std::vector<std::int64_t> shape(ndims);
        for (auto& d : shape) ls >> d;
        if (ls.fail() || shape != t->shape)
            throw IntegrityError("checkpoint: shape mismatch for " + name);
    }
    if (!std::getline(in, line) || line != "end-header")
        throw IoError("checkpoint: missing end-header in " + section);
    for (const auto& [name, t] : items) {
        (void)name;
        from_f32(*t, read_le_f32(in, t->data.size()));
    }
}

std::vector<std::pair<std::string, TensorPtr>> adapter_items(const Model& m) {
    std::vector<std::pair<std::string, TensorPtr>> items = m.adapter.all.items;
    for (const auto& it : sites_registry(m.sites).items) items.push_back(it);
    return items;
}

}  // namespace

void save_model(const std::string& path, const Model& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << kMagic << " " << kFormatVersion << "\n";
    out << "seed " << m.net.init_seed << "\n";
    out << "schedule_T " << m.net.schedule.T << "\n";
    out << "variant " << to_string(m.variant) << "\n";
    out << "frozen " << (m.net.frozen ? 1 : 0) << "\n";
    out << "frozen_checksum " << hex64(m.net.frozen ? m.net.frozen_checksum : 0) << "\n";
    write_section(out, m.net.registry.items);
    if (m.has_adapter()) {
        out << "adapter-section\n";
        write_section(out, adapter_items(m));
    }
    if (!out) throw IoError("checkpoint write failed: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);

    auto expect_kv = [&](const std::string& key) -> std::string {
        std::string line;
        if (!std::getline(in, line)) throw IoError("checkpoint: truncated header");
        std::istringstream ls(line);
        std::string k, v;
        ls >> k >> v;
        if (k != key || v.empty())
            throw IoError("checkpoint: expected '" + key + "', found line '" + line + "'");
        return v;
    };

    std::string magic_line;
    if (!std::getline(in, magic_line)) throw IoError("checkpoint: empty file");
    if (magic_line != std::string(kMagic) + " " + std::to_string(kFormatVersion))
        throw IoError("checkpoint: bad magic line '" + magic_line + "'");

    std::uint64_t seed = 0;
    std::int64_t T = 0;
    bool frozen = false;
    std::uint64_t stored_checksum = 0;
    Variant variant = Variant::backbone_only;
    try {
        seed = std::stoull(expect_kv("seed"));
        T = std::stoll(expect_kv("schedule_T"));
        variant = variant_from_string(expect_kv("variant"));
        frozen = expect_kv("frozen") == "1";
        stored_checksum = std::stoull(expect_kv("frozen_checksum"), nullptr, 16);
    } catch (const ConfigError&) {
        throw;
    } catch (const IoError&) {
        throw;
    } catch (const std::exception& e) {
        throw IoError(std::string("checkpoint: malformed header value: ") + e.what());
    }

    Model m = Model::init(seed, variant, make_schedule(T));
    read_section(in, m.net.registry.items, "backbone section");
    if (m.has_adapter()) {
        std::string marker;
        if (!std::getline(in, marker) || marker != "adapter-section")
            throw IoError("checkpoint: missing adapter section");
        read_section(in, adapter_items(m), "adapter section");
    }

    if (frozen) {
        m.net.freeze();
        if (m.net.frozen_checksum != stored_checksum)
            throw IntegrityError("checkpoint: frozen backbone checksum mismatch");
    }
    return m;
}

Model upgrade_variant(const Model& backbone, Variant v, std::uint64_t adapter_seed) {
    if (v == Variant::backbone_only)
        throw ConfigError("upgrade_variant: target variant carries no adapter");
    Model m = Model::init(adapter_seed, v, backbone.net.schedule);
    const auto& src = backbone.net.registry.items;
    const auto& dst = m.net.registry.items;
    if (src.size() != dst.size())
        throw ContractViolation("upgrade_variant: backbone registries diverge");
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i].first != dst[i].first)
            throw ContractViolation("upgrade_variant: registry order diverges at " +
                                    src[i].first);
        dst[i].second->data = src[i].second->data;
    }
    m.net.init_seed = backbone.net.init_seed;
    if (backbone.net.frozen) m.net.freeze();
    return m;
}

}  // namespace uniview
