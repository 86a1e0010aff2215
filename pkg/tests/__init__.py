# Pacote de testes
