#include "textcausal/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <memory>

#include "textcausal/errors.hpp"

namespace textcausal {

namespace {

struct CtxDeleter {
    void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};

std::string finish_hex(EVP_MD_CTX* ctx) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx, out.data(), &len) != 1)
        throw NumericalError("sha256 finalization failed");
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        s.push_back(hex[out[i] >> 4]);
        s.push_back(hex[out[i] & 0xf]);
    }
    return s;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
    return sha256_hex_fields({data});
}

std::string sha256_hex_fields(const std::vector<std::string_view>& fields) {
    std::unique_ptr<EVP_MD_CTX, CtxDeleter> ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw NumericalError("sha256 init failed");
    for (const auto& f : fields) {
        std::uint64_t n = f.size();
        unsigned char len_bytes[8];
        for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>((n >> (8 * i)) & 0xff);
        if (EVP_DigestUpdate(ctx.get(), len_bytes, 8) != 1 ||
            EVP_DigestUpdate(ctx.get(), f.data(), f.size()) != 1)
            throw NumericalError("sha256 update failed");
    }
    return finish_hex(ctx.get());
}

}  // namespace textcausal
