// LD_PRELOAD library that refuses every IPv4/IPv6 connect(). Each refused
// attempt is appended to $CREDLENS_OFFLINE_MARKER (if set) and reported on
// stderr, so a test can tell "no network was attempted" from "network failed".
#include <dlfcn.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include <cerrno>
#include <cstdio>
#include <cstdlib>

namespace {

using ConnectFn = int (*)(int, const sockaddr*, socklen_t);

void recordAttempt(int family) {
    std::fprintf(stderr, "offline_shim: blocked connect (family %d)\n", family);
    if (const char* marker = std::getenv("CREDLENS_OFFLINE_MARKER"); marker && *marker) {
        if (FILE* f = std::fopen(marker, "a")) {
            std::fprintf(f, "blocked family=%d\n", family);
            std::fclose(f);
        }
    }
}

}  // namespace

extern "C" int connect(int fd, const sockaddr* addr, socklen_t len) {
    if (addr && (addr->sa_family == AF_INET || addr->sa_family == AF_INET6)) {
        recordAttempt(addr->sa_family);
        errno = ENETUNREACH;
        return -1;
    }
    static const auto next = reinterpret_cast<ConnectFn>(dlsym(RTLD_NEXT, "connect"));
    if (!next) {
        errno = ENOSYS;
        return -1;
    }
    return next(fd, addr, len);
}
