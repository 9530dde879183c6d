#include "credlens/common/io.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <atomic>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>
#include <thread>

#include "credlens/common/error.hpp"

namespace credlens {

namespace fs = std::filesystem;

std::string readTextFile(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::vector<std::uint8_t> readBinaryFile(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void writeFileAtomic(const fs::path& path, std::string_view content) {
    static std::atomic<unsigned long long> counter{0};
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
    fs::path temp = path;
    temp += ".tmp." + std::to_string(tid) + "." + std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write file: " + temp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error("short write: " + temp.string());
    }
    std::error_code ec;
    fs::rename(temp, path, ec);
    if (ec) {
        fs::remove(temp);
        throw Error("cannot rename " + temp.string() + " -> " + path.string() + ": " + ec.message());
    }
}

namespace {

std::string toHex(const unsigned char* data, std::size_t n) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(2 * n, '0');
    for (std::size_t i = 0; i < n; ++i) {
        out[2 * i] = kDigits[data[i] >> 4];
        out[2 * i + 1] = kDigits[data[i] & 0xF];
    }
    return out;
}

}  // namespace

std::string sha256Hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    unsigned int length = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr);
    return toHex(digest, length);
}

std::string sha256Hex(std::string_view text) {
    return sha256Hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256File(const fs::path& path) {
    const auto bytes = readBinaryFile(path);
    return sha256Hex(std::span<const std::uint8_t>(bytes));
}

std::string base64Encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                        static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(written));
    return out;
}

std::string formatDouble(double value) {
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return {buffer, result.ptr};
}

double parseDouble(std::string_view text) {
    const std::string cleaned = trim(text);
    double value = 0.0;
    const char* begin = cleaned.data();
    const char* end = begin + cleaned.size();
    if (!cleaned.empty() && *begin == '+') ++begin;
    const auto result = std::from_chars(begin, end, value);
    if (cleaned.empty() || result.ec != std::errc() || result.ptr != end) {
        throw Error("not a number: '" + std::string(text) + "'");
    }
    return value;
}

long long parseInteger(std::string_view text) {
    const std::string cleaned = trim(text);
    long long value = 0;
    const char* begin = cleaned.data();
    const char* end = begin + cleaned.size();
    if (!cleaned.empty() && *begin == '+') ++begin;
    const auto result = std::from_chars(begin, end, value);
    if (cleaned.empty() || result.ec != std::errc() || result.ptr != end) {
        throw Error("not an integer: '" + std::string(text) + "'");
    }
    return value;
}

std::string trim(std::string_view text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    return std::string(text.substr(begin, end - begin));
}

std::string toLower(std::string_view text) {
    std::string out(text);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace credlens
