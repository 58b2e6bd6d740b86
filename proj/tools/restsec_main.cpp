#include "restsec/cli.hpp"

int main(int argc, char** argv) { return restsec::cli_main(argc, argv); }
