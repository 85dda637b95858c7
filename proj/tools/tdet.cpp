#include "tdet/cli.hpp"

int main(int argc, char** argv) {
    return tdet::cli_main(argc, argv);
}
