#include <algorithm>
#include <bit>
#include <cstdio>
#include <cmath>
#include <cstring>

#include "credlens/baseline.hpp"
#include "credlens/common/csv.hpp"
#include "credlens/common/io.hpp"
#include "credlens/common/parallel.hpp"

namespace credlens::baseline {

namespace {

void checkCoverage(const EmbeddingTable& table, const corpus::PostCollection& posts) {
    for (const auto& post : posts.posts()) {
        if (!table.rows.count(post.id)) throw EmbeddingError("embeddings: no vector for post '" + post.id + "'");
    }
}

template <class T>
T readLe(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    if (offset + sizeof(T) > bytes.size()) throw EmbeddingError("embeddings: truncated binary file");
    T value;
    std::memcpy(&value, bytes.data() + offset, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        auto* p = reinterpret_cast<std::uint8_t*>(&value);
        std::reverse(p, p + sizeof(T));
    }
    offset += sizeof(T);
    return value;
}

template <class T>
void writeLe(std::vector<std::uint8_t>& out, T value) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

}  // namespace

EmbeddingTable parseEmbeddingsCsv(std::string_view text, const corpus::PostCollection& posts) {
    const auto table = csv::parse(text);
    if (table.header.empty() || table.header[0] != "post_id") throw EmbeddingError("embeddings: header must start with post_id");
    EmbeddingTable out;
    out.dim = table.header.size() - 1;
    if (out.dim == 0) throw EmbeddingError("embeddings: no dimensions");
    for (std::size_t j = 0; j < out.dim; ++j) {
        if (table.header[j + 1] != "dim" + std::to_string(j)) {
            throw EmbeddingError("embeddings: header column " + std::to_string(j + 1) + " must be dim" + std::to_string(j));
        }
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = "embeddings line " + std::to_string(table.lineNumbers[r]);
        if (row.size() != out.dim + 1) {
            throw EmbeddingError(where + ": expected " + std::to_string(out.dim) + " values, got " +
                                 std::to_string(row.size() - 1));
        }
        if (!posts.contains(row[0])) throw EmbeddingError(where + ": unknown post '" + row[0] + "'");
        std::vector<double> v(out.dim);
        for (std::size_t j = 0; j < out.dim; ++j) {
            double x;
            try {
                x = parseDouble(row[j + 1]);
            } catch (const Error&) {
                throw EmbeddingError(where + ", column dim" + std::to_string(j) + ": not a number");
            }
            if (!std::isfinite(x)) throw EmbeddingError(where + ", column dim" + std::to_string(j) + ": non-finite value");
            v[j] = x;
        }
        if (!out.rows.emplace(row[0], std::move(v)).second) throw EmbeddingError(where + ": duplicate post '" + row[0] + "'");
    }
    checkCoverage(out, posts);
    return out;
}

EmbeddingTable parseEmbeddingsBinary(std::span<const std::uint8_t> bytes, const corpus::PostCollection& posts) {
    if (bytes.size() < kEmbeddingMagic.size() ||
        std::memcmp(bytes.data(), kEmbeddingMagic.data(), kEmbeddingMagic.size()) != 0) {
        throw EmbeddingError("embeddings: bad magic");
    }
    std::size_t offset = kEmbeddingMagic.size();
    const auto count = readLe<std::uint32_t>(bytes, offset);
    EmbeddingTable out;
    out.dim = readLe<std::uint32_t>(bytes, offset);
    if (out.dim == 0) throw EmbeddingError("embeddings: no dimensions");
    for (std::uint32_t r = 0; r < count; ++r) {
        const auto len = readLe<std::uint16_t>(bytes, offset);
        if (offset + len > bytes.size()) throw EmbeddingError("embeddings: truncated binary file");
        std::string id(reinterpret_cast<const char*>(bytes.data() + offset), len);
        offset += len;
        const std::string where = "embeddings row " + std::to_string(r + 1);
        if (!posts.contains(id)) throw EmbeddingError(where + ": unknown post '" + id + "'");
        std::vector<double> v(out.dim);
        for (std::size_t j = 0; j < out.dim; ++j) {
            v[j] = readLe<double>(bytes, offset);
            if (!std::isfinite(v[j])) throw EmbeddingError(where + ", column dim" + std::to_string(j) + ": non-finite value");
        }
        if (!out.rows.emplace(id, std::move(v)).second) throw EmbeddingError(where + ": duplicate post '" + id + "'");
    }
    if (offset != bytes.size()) throw EmbeddingError("embeddings: trailing bytes after last row");
    checkCoverage(out, posts);
    return out;
}

EmbeddingTable loadEmbeddings(const std::filesystem::path& path, const corpus::PostCollection& posts) {
    const auto bytes = readBinaryFile(path);
    EmbeddingTable table;
    if (bytes.size() >= kEmbeddingMagic.size() &&
        std::memcmp(bytes.data(), kEmbeddingMagic.data(), kEmbeddingMagic.size()) == 0) {
        table = parseEmbeddingsBinary(bytes, posts);
    } else {
        table = parseEmbeddingsCsv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), posts);
    }
    table.source = path.filename().string();
    return table;
}

std::vector<std::uint8_t> encodeEmbeddingsBinary(const EmbeddingTable& table) {
    std::vector<std::uint8_t> out(kEmbeddingMagic.begin(), kEmbeddingMagic.end());
    writeLe<std::uint32_t>(out, static_cast<std::uint32_t>(table.rows.size()));
    writeLe<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim));
    for (const auto& [id, v] : table.rows) {
        writeLe<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
        out.insert(out.end(), id.begin(), id.end());
        for (double x : v) writeLe<double>(out, x);
    }
    return out;
}

std::string encodeEmbeddingsCsv(const EmbeddingTable& table) {
    csv::Row header{"post_id"};
    for (std::size_t j = 0; j < table.dim; ++j) header.push_back("dim" + std::to_string(j));
    std::string out = csv::formatRow(header);
    for (const auto& [id, v] : table.rows) {
        csv::Row row{id};
        for (double x : v) row.push_back(formatDouble(x));
        out += csv::formatRow(row);
    }
    return out;
}

std::vector<quantify::ColumnBlock> baselineBlocks(const corpus::PostCollection& posts, std::size_t threads) {
    const auto& list = posts.posts();
    std::vector<std::vector<std::pair<std::string, double>>> perPost(list.size());
    parallelFor(list.size(), threads, [&](std::size_t i) {
        auto row = imageFeatures(loadImage(list[i].imagePath)).named();
        for (auto& [name, v] : row) name = "base_img_" + name;
        for (auto [name, v] : textFeatures(list[i].caption).named()) row.emplace_back("base_txt_" + name, v);
        perPost[i] = std::move(row);
    });
    std::map<std::string, quantify::ColumnBlock> blocks;
    for (std::size_t i = 0; i < list.size(); ++i) {
        for (const auto& [name, v] : perPost[i]) {
            auto& block = blocks[name];
            block.name = name;
            block.provenance = quantify::Provenance::Baseline;
            block.values[list[i].id] = v;
        }
        for (const auto& [detector, v] : list[i].externalScores) {
            const std::string name = "base_ext_" + detector;
            auto& block = blocks[name];
            block.name = name;
            block.provenance = quantify::Provenance::Baseline;
            block.values[list[i].id] = v;
        }
    }
    std::vector<quantify::ColumnBlock> out;
    for (auto& [name, block] : blocks) out.push_back(std::move(block));
    return out;
}

std::vector<quantify::ColumnBlock> embeddingBlocks(const EmbeddingTable& table) {
    std::vector<quantify::ColumnBlock> out(table.dim);
    for (std::size_t j = 0; j < table.dim; ++j) {
        char name[16];
        std::snprintf(name, sizeof name, "emb_%04zu", j);
        out[j].name = name;
        out[j].provenance = quantify::Provenance::Embedding;
    }
    for (const auto& [id, v] : table.rows)
        for (std::size_t j = 0; j < table.dim; ++j) out[j].values[id] = v[j];
    return out;
}

}  // namespace credlens::baseline
