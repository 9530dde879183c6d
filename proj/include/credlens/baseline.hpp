#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "credlens/corpus.hpp"
#include "credlens/quantify.hpp"

namespace credlens::baseline {

class ImageError : public Error {
public:
    using Error::Error;
};

class EmbeddingError : public Error {
public:
    using Error::Error;
};

/// 8-bit interleaved RGB raster.
struct Image {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<std::uint8_t> rgb;

    std::uint8_t at(std::uint32_t x, std::uint32_t y, int channel) const {
        return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + channel];
    }
};

/// PNG or JPEG, chosen by signature. Alpha is dropped, gray is expanded.
Image decodeImage(std::span<const std::uint8_t> bytes);
Image loadImage(const std::filesystem::path& path);
std::vector<std::uint8_t> encodePng(const Image& image);

struct ImageFeatures {
    double brightness = 0.0;
    double colorfulness = 0.0;
    double meanR = 0.0, meanG = 0.0, meanB = 0.0;
    double sdR = 0.0, sdG = 0.0, sdB = 0.0;
    double aspectRatio = 0.0;
    double sharpness = 0.0;
    double complexity = 0.0;
    double edgeDensity = 0.0;

    std::vector<std::pair<std::string, double>> named() const;
};

/// Channel statistics use [0,1]-scaled values and population moments;
/// colorfulness is on the 0-255 scale. Sharpness and edge density are taken
/// over interior pixels (0 for images narrower or shorter than 3).
ImageFeatures imageFeatures(const Image& image);
ImageFeatures imageFeatures(std::span<const std::uint8_t> encoded);

/// Luminance 0.299R + 0.587G + 0.114B on [0,1] channels, row-major.
std::vector<double> luminance(const Image& image);

struct ReadabilityCounts {
    std::size_t words = 0;
    std::size_t sentences = 0;
    std::size_t syllables = 0;
};

/// Vowel groups (a e i o u y) with a silent final 'e' dropped when another
/// group remains; at least 1 per word.
std::size_t countSyllables(std::string_view word);
/// Words are tokens with at least one ASCII letter, excluding URLs and
/// mentions; hashtags count by their text. Sentences are segments between
/// runs of . ? ! that contain a letter (minimum 1 when any word exists).
ReadabilityCounts readabilityCounts(std::string_view caption);
/// 0 when there are no words.
double fleschReadingEase(const ReadabilityCounts& c);
double fleschKincaidGrade(const ReadabilityCounts& c);

inline constexpr std::string_view kLexiconVersion = "credlens-valence-v1";
/// Valence in [-3, 3] for a lower-case word, 0 when unlisted.
int lexiconValence(std::string_view word);

struct TextFeatures {
    std::size_t wordCount = 0;
    std::size_t hashtagCount = 0;
    std::size_t mentionCount = 0;
    std::size_t emojiCount = 0;
    std::size_t urlCount = 0;
    double fleschReadingEase = 0.0;
    double fleschKincaidGrade = 0.0;
    double sentiment = 0.0;

    std::vector<std::pair<std::string, double>> named() const;
};

bool isEmojiCodePoint(char32_t cp);
bool isUrlToken(std::string_view token);
/// Whitespace tokens; '#'/'@' followed by a word character are hashtags /
/// mentions; emoji are counted per code point (a regional-indicator pair
/// counts once).
TextFeatures textFeatures(std::string_view caption);

struct EmbeddingTable {
    std::string source;
    std::size_t dim = 0;
    std::map<std::string, std::vector<double>> rows;
};

inline constexpr std::string_view kEmbeddingMagic = "CLEMB001";

/// CSV (`post_id,dim0..dim{d-1}`) or the binary layout: magic "CLEMB001",
/// u32 row count, u32 dim, then per row u16 id length, id bytes, dim
/// float64; all little-endian. Every post must be covered, no unknown ids,
/// uniform dimension, finite values.
EmbeddingTable loadEmbeddings(const std::filesystem::path& path, const corpus::PostCollection& posts);
EmbeddingTable parseEmbeddingsCsv(std::string_view text, const corpus::PostCollection& posts);
EmbeddingTable parseEmbeddingsBinary(std::span<const std::uint8_t> bytes, const corpus::PostCollection& posts);
std::vector<std::uint8_t> encodeEmbeddingsBinary(const EmbeddingTable& table);
std::string encodeEmbeddingsCsv(const EmbeddingTable& table);

/// base_img_*, base_txt_* and base_ext_* (external detector scores, when
/// any post has them) columns.
std::vector<quantify::ColumnBlock> baselineBlocks(const corpus::PostCollection& posts, std::size_t threads = 4);
/// emb_0000 ... columns.
std::vector<quantify::ColumnBlock> embeddingBlocks(const EmbeddingTable& table);

}  // namespace credlens::baseline
