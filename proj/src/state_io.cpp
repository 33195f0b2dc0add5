#include "tipping/state_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "tipping/error.hpp"

namespace tipping::hsf {

namespace {

constexpr std::array<char, 4> kMagic = {'H', 'S', 'F', '1'};

std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    }
    return v;
}

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::uint32_t le = to_little_endian(v);
    char bytes[4];
    std::memcpy(bytes, &le, 4);
    out.write(bytes, 4);
}

std::size_t expected_floats(const LabeledStateSet& set, const Group& g) {
    return set.layer_count * g.token_count * set.dim;
}

std::string index_string(std::size_t group, std::size_t flat, const LabeledStateSet& set,
                         const Group& g) {
    const std::size_t per_layer = g.token_count * set.dim;
    const std::size_t layer = flat / per_layer;
    const std::size_t token = (flat % per_layer) / set.dim;
    const std::size_t d = flat % set.dim;
    return "group " + std::to_string(group) + " layer " + std::to_string(layer) + " token " +
           std::to_string(token) + " dim " + std::to_string(d);
}

}  // namespace

std::string_view to_string(Label label) {
    switch (label) {
        case Label::A: return "A";
        case Label::B: return "B";
        case Label::D: return "D";
        case Label::C: return "C";
    }
    return "?";
}

Label parse_label(std::string_view text) {
    if (text == "A") return Label::A;
    if (text == "B") return Label::B;
    if (text == "D") return Label::D;
    if (text == "C") return Label::C;
    throw Error(ErrorKind::BadLabel, "unknown group label \"" + std::string(text) + "\"");
}

Vector Group::token_vector(std::size_t layer, std::size_t t, std::size_t dim) const {
    const auto row = token(layer, t, dim);
    return Vector(row.begin(), row.end());
}

void LabeledStateSet::validate() const {
    if (!groups.empty() && (dim == 0 || layer_count == 0)) {
        throw Error(ErrorKind::ShapeMismatch, "dim and layer_count must be positive");
    }
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const Group& g = groups[gi];
        if (g.token_count == 0) {
            throw Error(ErrorKind::ShapeMismatch, "group " + std::to_string(gi) + " has no tokens");
        }
        const std::size_t want = expected_floats(*this, g);
        if (g.data.size() != want) {
            throw Error(ErrorKind::ShapeMismatch, "group " + std::to_string(gi) + " holds " +
                                                      std::to_string(g.data.size()) +
                                                      " values, expected " + std::to_string(want));
        }
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            if (!std::isfinite(g.data[i])) {
                throw Error(ErrorKind::NonFinite, index_string(gi, i, *this, g));
            }
        }
    }
}

bool LabeledStateSet::has_label(Label label) const {
    for (const auto& g : groups) {
        if (g.label == label) return true;
    }
    return false;
}

std::vector<const Group*> LabeledStateSet::groups_with(Label label) const {
    std::vector<const Group*> out;
    for (const auto& g : groups) {
        if (g.label == label) out.push_back(&g);
    }
    return out;
}

std::size_t data_byte_count(const LabeledStateSet& set) {
    std::size_t n = 0;
    for (const auto& g : set.groups) n += expected_floats(set, g) * sizeof(float);
    return n;
}

std::size_t write_hsf(const LabeledStateSet& set, std::ostream& sink) {
    set.validate();

    nlohmann::json header;
    header["version"] = kFormatVersion;
    header["dim"] = set.dim;
    header["layer_count"] = set.layer_count;
    header["dtype"] = "f32le";
    header["groups"] = nlohmann::json::array();
    for (const auto& g : set.groups) {
        header["groups"].push_back(
            {{"label", to_string(g.label)}, {"phrase", g.phrase}, {"token_count", g.token_count}});
    }
    if (!set.meta.empty()) header["meta"] = set.meta;
    const std::string text = header.dump();

    sink.write(kMagic.data(), kMagic.size());
    put_u32(sink, static_cast<std::uint32_t>(text.size()));
    sink.write(text.data(), static_cast<std::streamsize>(text.size()));

    std::vector<char> buffer;
    for (const auto& g : set.groups) {
        buffer.resize(g.data.size() * 4);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            const std::uint32_t le = to_little_endian(std::bit_cast<std::uint32_t>(g.data[i]));
            std::memcpy(buffer.data() + 4 * i, &le, 4);
        }
        sink.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    }
    if (!sink) throw Error(ErrorKind::Io, "write to HSF sink failed");
    return kMagic.size() + 4 + text.size() + data_byte_count(set);
}

LabeledStateSet read_hsf(std::istream& source) {
    std::array<char, 4> magic{};
    source.read(magic.data(), 4);
    if (source.gcount() != 4 || magic != kMagic) throw Error(ErrorKind::BadMagic, "missing HSF1 magic");

    char len_bytes[4];
    source.read(len_bytes, 4);
    if (source.gcount() != 4) throw Error(ErrorKind::Truncated, "stream ends inside the header length");
    std::uint32_t raw_len = 0;
    std::memcpy(&raw_len, len_bytes, 4);
    const std::uint32_t header_len = to_little_endian(raw_len);

    std::string text(header_len, '\0');
    source.read(text.data(), header_len);
    if (static_cast<std::uint32_t>(source.gcount()) != header_len) {
        throw Error(ErrorKind::Truncated, "stream ends inside the JSON header");
    }

    LabeledStateSet set;
    std::vector<std::size_t> token_counts;
    try {
        const auto header = nlohmann::json::parse(text);
        if (header.at("version").get<std::uint32_t>() != kFormatVersion) {
            throw Error(ErrorKind::BadHeader, "unsupported version " + header.at("version").dump());
        }
        if (header.at("dtype").get<std::string>() != "f32le") {
            throw Error(ErrorKind::BadHeader, "unsupported dtype " + header.at("dtype").dump());
        }
        set.dim = header.at("dim").get<std::size_t>();
        set.layer_count = header.at("layer_count").get<std::size_t>();
        for (const auto& jg : header.at("groups")) {
            Group g;
            g.label = parse_label(jg.at("label").get<std::string>());
            g.phrase = jg.at("phrase").get<std::string>();
            g.token_count = jg.at("token_count").get<std::size_t>();
            set.groups.push_back(std::move(g));
        }
        if (header.contains("meta")) set.meta = header.at("meta");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::BadHeader, e.what());
    }

    const std::size_t expected = data_byte_count(set);
    std::vector<char> payload(expected);
    source.read(payload.data(), static_cast<std::streamsize>(expected));
    const auto got = static_cast<std::size_t>(source.gcount());
    std::size_t extra = 0;
    if (got == expected) {
        char probe;
        while (source.read(&probe, 1)) ++extra;
    }
    if (got != expected || extra != 0) {
        throw Error(ErrorKind::ShapeMismatch, "tensor data holds " + std::to_string(got + extra) +
                                                  " bytes, header implies " + std::to_string(expected));
    }

    std::size_t offset = 0;
    for (auto& g : set.groups) {
        g.data.resize(expected_floats(set, g));
        for (float& v : g.data) {
            std::uint32_t le = 0;
            std::memcpy(&le, payload.data() + offset, 4);
            v = std::bit_cast<float>(to_little_endian(le));
            offset += 4;
        }
    }
    set.validate();
    return set;
}

std::size_t save_hsf(const LabeledStateSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    const std::size_t n = write_hsf(set, out);
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
    return n;
}

LabeledStateSet load_hsf(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return read_hsf(in);
}

std::size_t penultimate_layer(const LabeledStateSet& set) {
    return set.layer_count >= 2 ? set.layer_count - 2 : 0;
}

}  // namespace tipping::hsf
