from mbrl_game.main import main


if __name__ == "__main__":
    main()
