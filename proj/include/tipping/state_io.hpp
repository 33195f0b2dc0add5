#pragma once

// Hidden-state fixture (HSF) format.
//
//   bytes 0..3   magic "HSF1"
//   bytes 4..7   header length N, uint32 little-endian
//   next N bytes UTF-8 JSON header:
//                {"version":1,"dim":D,"layer_count":L,"dtype":"f32le",
//                 "groups":[{"label":"A|B|D|C","phrase":"...","token_count":T}, ...],
//                 "meta":{...}}            // "meta" optional, carried verbatim
//   then, per group in header order, L*T*D float32 little-endian values
//   laid out [layer][token][dim].
//
// Layer 0 is the input embedding. Each group is one phrase, so phrase
// boundaries are the group boundaries.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tipping/vector_ops.hpp"

namespace tipping::hsf {

inline constexpr std::uint32_t kFormatVersion = 1;

enum class Label { A, B, D, C };

std::string_view to_string(Label label);
// Throws BadLabel for anything outside {A, B, D, C}.
Label parse_label(std::string_view text);

struct Group {
    Label label = Label::A;
    std::string phrase;
    std::size_t token_count = 0;
    std::vector<float> data;  // [layer][token][dim]

    std::span<const float> token(std::size_t layer, std::size_t t, std::size_t dim) const {
        return {data.data() + (layer * token_count + t) * dim, dim};
    }
    // One token's residual at a layer, widened to double.
    Vector token_vector(std::size_t layer, std::size_t t, std::size_t dim) const;

    bool operator==(const Group&) const = default;
};

struct LabeledStateSet {
    std::size_t dim = 0;
    std::size_t layer_count = 0;
    std::vector<Group> groups;
    nlohmann::json meta = nlohmann::json::object();

    // Shape, label and finiteness checks; throws on the first violation.
    void validate() const;

    bool has_label(Label label) const;
    std::vector<const Group*> groups_with(Label label) const;

    bool operator==(const LabeledStateSet&) const = default;
};

std::size_t data_byte_count(const LabeledStateSet& set);

// Returns the number of bytes written.
std::size_t write_hsf(const LabeledStateSet& set, std::ostream& sink);
LabeledStateSet read_hsf(std::istream& source);

std::size_t save_hsf(const LabeledStateSet& set, const std::filesystem::path& path);
LabeledStateSet load_hsf(const std::filesystem::path& path);

// Penultimate residual entry when there are at least two, else layer 0.
std::size_t penultimate_layer(const LabeledStateSet& set);

}  // namespace tipping::hsf
